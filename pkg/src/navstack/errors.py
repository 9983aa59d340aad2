"""Exception hierarchy shared by every navstack module."""


class NavError(Exception):
    """Base class for all navstack errors."""


class InvalidArgument(NavError, ValueError):
    pass


class OutOfBounds(NavError, IndexError):
    pass


class UnreachableGoal(NavError):
    pass


class OffPath(NavError):
    """Pose is farther from the reference path than the corridor allows."""


class SingularProjection(NavError):
    """Lateral offset folds over the reference path (|d * kappa| >= 1)."""


class NoFeasiblePath(NavError):
    pass


class InfeasibleProfile(NavError):
    pass


class InfeasibleQP(NavError):
    pass


class LowSpeed(NavError):
    """Dynamic lateral model is singular near standstill."""


class NoState(NavError):
    pass


class InsufficientStructure(NavError):
    pass


class DegenerateCorner(NavError):
    pass


class AmbiguousMatch(NavError):
    pass


class MissingCalibration(NavError, KeyError):
    pass


class ScenarioError(NavError):
    """Scenario failed validation; ``errors`` holds ``(field_path, message)`` pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        lines = [f"{path}: {msg}" for path, msg in self.errors]
        super().__init__("invalid scenario:\n  " + "\n  ".join(lines))
