"""Point cloud and rigid transform value types."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidArgument

ORTHO_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class PointCloud3D:
    points: np.ndarray              # (N, 3)
    sensor_id: str = ""
    point_sensor: tuple[str, ...] | None = field(default=None, repr=False)  # per-point provenance

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise InvalidArgument("point cloud has non-finite coordinates")
        object.__setattr__(self, "points", pts)
        if self.point_sensor is not None and len(self.point_sensor) != len(pts):
            raise InvalidArgument("point_sensor must have one entry per point")

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True, eq=False)
class RigidTransform3D:
    """``p_a = R @ p_b + t``."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=float).reshape(3, 3)
        t = np.asarray(self.t, dtype=float).reshape(3)
        if np.abs(R.T @ R - np.eye(3)).max() >= ORTHO_TOL * 10 or np.linalg.det(R) <= 0:
            raise InvalidArgument("R must be a proper rotation")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> "RigidTransform3D":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m) -> "RigidTransform3D":
        m = np.asarray(m, dtype=float)
        return cls(orthonormalize(m[:3, :3]), m[:3, 3])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.R
        m[:3, 3] = self.t
        return m

    def apply(self, pts) -> np.ndarray:
        return np.asarray(pts, dtype=float) @ self.R.T + self.t

    def compose(self, other: "RigidTransform3D") -> "RigidTransform3D":
        """``self ∘ other``: apply ``other`` first."""
        return RigidTransform3D(orthonormalize(self.R @ other.R), self.R @ other.t + self.t)

    def inverse(self) -> "RigidTransform3D":
        return RigidTransform3D(self.R.T.copy(), -self.R.T @ self.t)


def orthonormalize(R) -> np.ndarray:
    """Nearest proper rotation (polar decomposition via SVD)."""
    U, _, Vt = np.linalg.svd(np.asarray(R, dtype=float))
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt)) or 1.0])
    return U @ D @ Vt


def rotation_angle(R) -> float:
    """Angle of a rotation matrix, radians."""
    c = (np.trace(R) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def rotvec_to_matrix(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    th = float(np.linalg.norm(w))
    K = np.array([[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]])
    if th < 1e-12:
        return orthonormalize(np.eye(3) + K)
    K /= th
    return np.eye(3) + np.sin(th) * K + (1 - np.cos(th)) * K @ K
