"""Time parameterization of planned paths and emergency-stop profiles."""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np

from .core import Pose2D, Trajectory, TrajectoryPoint, VehicleState
from .errors import InfeasibleProfile, InvalidArgument

log = logging.getLogger(__name__)

KAPPA_EPS = 1e-9
EMERGENCY_POINTS = 11
STOPPED_SPEED = 1e-6   # m/s; below this the vehicle counts as at rest


@dataclass(frozen=True)
class DynamicLimits:
    v_max: float = 5.0
    a_max: float = 1.0
    a_min: float = -2.0
    a_lat_max: float = 1.5
    jerk_max: float = 2.0

    def __post_init__(self):
        if not (self.v_max > 0 and self.a_max > 0 and self.a_min < 0 and self.a_lat_max > 0):
            raise InvalidArgument(f"invalid dynamic limits {self}")


class Source(str, enum.Enum):
    NOMINAL = "Nominal"
    EMERGENCY = "Emergency"


@dataclass(frozen=True)
class PlannedTrajectory:
    trajectory: Trajectory
    tick: int = 0
    source: Source = Source.NOMINAL
    over_cap_start: bool = False

    @property
    def points(self):
        return self.trajectory.points


def speed_caps(kappa, limits: DynamicLimits, speed_limit=None) -> np.ndarray:
    kappa = np.abs(np.asarray(kappa, dtype=float))
    cap = np.minimum(limits.v_max, np.sqrt(limits.a_lat_max / np.maximum(kappa, KAPPA_EPS)))
    if speed_limit is not None:
        cap = np.minimum(cap, speed_limit)
    return cap


def forward_backward(ds, cap, v0: float, v_end: float, a_max: float, a_min: float) -> np.ndarray:
    """Accel-limited speed profile under per-sample caps.

    ``v[0]`` is pinned to ``v0`` even when it exceeds the cap.
    """
    n = len(cap)
    v = np.minimum(cap, math.inf).astype(float)
    v[0] = v0
    for i in range(1, n):
        v[i] = min(v[i], math.sqrt(v[i - 1] ** 2 + 2.0 * a_max * ds[i - 1]))
    v[-1] = min(v[-1], v_end)
    for i in range(n - 2, -1, -1):
        lim = math.sqrt(v[i + 1] ** 2 - 2.0 * a_min * ds[i])
        if v[i] > lim:
            v[i] = lim
    return v


def _jerk_clamp(v, ds, jerk_max):
    """Single smoothing pass that only lowers speeds where accel changes too fast.

    Approximate by design: it never raises a speed, so caps still hold.
    """
    out = v.copy()
    for i in range(1, len(v) - 1):
        a0 = (out[i] ** 2 - out[i - 1] ** 2) / (2 * ds[i - 1])
        a1 = (out[i + 1] ** 2 - out[i] ** 2) / (2 * ds[i])
        vbar = max(0.5 * (out[i - 1] + out[i + 1]), 1e-3)
        dt = (ds[i - 1] + ds[i]) / vbar
        if abs(a1 - a0) / dt > jerk_max:
            out[i] = min(out[i], math.sqrt(max(0.5 * (out[i - 1] ** 2 + out[i + 1] ** 2), 0.0)))
    return out


def time_parameterize(xs, ys, kappa, s, limits: DynamicLimits, v0: float, v_end: float, *,
                      speed_limit=None, headings=None, tick: int = 0, start_time: float = 0.0,
                      jerk_clamp: bool = False) -> PlannedTrajectory:
    """Speed profile and timestamps for a sampled path.

    Caps speed by ``v_max``, the per-sample ``speed_limit`` and lateral
    acceleration, then runs a forward accel pass from ``v0`` and a backward
    decel pass to ``v_end``. Raises :class:`InfeasibleProfile` when ``v_end``
    cannot be reached from ``v0`` in the available distance.
    """
    xs, ys, kappa, s = (np.asarray(a, dtype=float) for a in (xs, ys, kappa, s))
    if v0 < 0:
        raise InvalidArgument("v0 must be non-negative")
    if len(s) < 2:
        raise InvalidArgument("path needs at least two samples")
    keep = np.concatenate([[True], np.diff(s) > 1e-9])
    xs, ys, kappa, s = xs[keep], ys[keep], kappa[keep], s[keep]
    if speed_limit is not None and np.ndim(speed_limit):
        speed_limit = np.asarray(speed_limit, dtype=float)[keep]
    if headings is not None:
        headings = np.asarray(headings, dtype=float)[keep]
    else:
        headings = np.arctan2(np.gradient(ys), np.gradient(xs))
    ds = np.diff(s)
    cap = speed_caps(kappa, limits, speed_limit)
    over = v0 > cap[0] + 1e-9
    if over:
        log.debug("initial speed %.3f above cap %.3f; keeping it", v0, cap[0])
    v = forward_backward(ds, cap, v0, v_end, limits.a_max, limits.a_min)
    if v[0] < v0 - 1e-9:
        raise InfeasibleProfile(
            f"cannot brake from {v0:.3f} to {v_end:.3f} m/s within {s[-1] - s[0]:.3f} m")
    if jerk_clamp:
        v = _jerk_clamp(v, ds, limits.jerk_max)
        v = forward_backward(ds, np.minimum(cap, v), v0, v_end, limits.a_max, limits.a_min)
    v[0] = v0
    if v[-1] <= 0.0 and len(v) > 1 and v[-2] <= 0.0:
        raise InfeasibleProfile("profile stalls before the end of the path")

    vbar = v[:-1] + v[1:]
    if np.any(vbar <= 0.0):
        raise InfeasibleProfile("zero-speed interval inside the profile")
    dt = 2.0 * ds / vbar
    t = np.concatenate([[0.0], np.cumsum(dt)])
    acc = np.empty_like(v)
    acc[:-1] = (v[1:] ** 2 - v[:-1] ** 2) / (2.0 * ds)
    acc[-1] = acc[-2] if len(acc) > 1 else 0.0
    pts = tuple(TrajectoryPoint(Pose2D(float(xs[i]), float(ys[i]), float(headings[i])), float(v[i]),
                                float(acc[i]), float(kappa[i]), float(t[i])) for i in range(len(v)))
    return PlannedTrajectory(Trajectory(pts, start_time=start_time), tick, Source.NOMINAL, bool(over))


def emergency_stop(state: VehicleState, limits: DynamicLimits, *, tick: int = 0) -> PlannedTrajectory:
    """Constant-deceleration stop along the current heading."""
    v0 = max(state.speed, 0.0)
    p = state.pose
    if v0 <= STOPPED_SPEED:
        pt = TrajectoryPoint(p, 0.0, 0.0, 0.0, 0.0)
        return PlannedTrajectory(Trajectory((pt,), start_time=state.timestamp), tick, Source.EMERGENCY)
    a = limits.a_min
    t_stop = -v0 / a
    c, s = math.cos(p.heading), math.sin(p.heading)
    pts = []
    for k in range(EMERGENCY_POINTS):
        t = t_stop * k / (EMERGENCY_POINTS - 1)
        dist = v0 * t + 0.5 * a * t * t
        v = v0 + a * t if k < EMERGENCY_POINTS - 1 else 0.0
        pts.append(TrajectoryPoint(Pose2D(p.x + dist * c, p.y + dist * s, p.heading), v, a, 0.0, t))
    return PlannedTrajectory(Trajectory(tuple(pts), start_time=state.timestamp), tick, Source.EMERGENCY)


def stop_distance(speed: float, limits: DynamicLimits) -> float:
    return speed * speed / (2.0 * -limits.a_min)


def check_limits(traj: Trajectory, limits: DynamicLimits, caps=None, eps: float = 1e-6) -> list[str]:
    """Human-readable list of limit violations (empty when the trajectory is feasible)."""
    bad = []
    pts = traj.points
    for i, p in enumerate(pts):
        if p.speed > limits.v_max + eps:
            bad.append(f"point {i}: speed {p.speed} > v_max")
        if caps is not None and p.speed > caps[i] + eps:
            bad.append(f"point {i}: speed {p.speed} > cap {caps[i]}")
        if p.speed ** 2 * abs(p.curvature) > limits.a_lat_max + eps:
            bad.append(f"point {i}: lateral accel {p.speed ** 2 * abs(p.curvature)}")
    for i, (a, b) in enumerate(zip(pts, pts[1:])):
        dt = b.time_offset - a.time_offset
        acc = (b.speed - a.speed) / dt
        if not (limits.a_min - eps <= acc <= limits.a_max + eps):
            bad.append(f"segment {i}: accel {acc}")
    return bad
