"""Shared geometric and kinodynamic value types.

Everything here is immutable after construction. Planar poses use the
rear-axle reference point and a heading kept in ``(-pi, pi]``.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidArgument, OutOfBounds

TWO_PI = 2.0 * math.pi


def normalize_angle(theta: float) -> float:
    """Wrap ``theta`` into ``(-pi, pi]``."""
    if not math.isfinite(theta):
        raise InvalidArgument(f"angle must be finite, got {theta!r}")
    r = math.remainder(theta, TWO_PI)
    if r <= -math.pi:
        r += TWO_PI
    elif r > math.pi:
        r -= TWO_PI
    return r


def angle_diff(a: float, b: float) -> float:
    """Shortest signed arc from ``b`` to ``a``."""
    return normalize_angle(a - b)


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "heading", normalize_angle(float(self.heading)))

    def distance_to(self, other: "Pose2D") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def transform_points(self, pts) -> np.ndarray:
        """Map body-frame points (N, 2) into the world frame."""
        pts = np.asarray(pts, dtype=float)
        c, s = math.cos(self.heading), math.sin(self.heading)
        out = np.empty_like(pts)
        out[..., 0] = self.x + c * pts[..., 0] - s * pts[..., 1]
        out[..., 1] = self.y + s * pts[..., 0] + c * pts[..., 1]
        return out


@dataclass(frozen=True)
class VehicleState:
    pose: Pose2D
    speed: float = 0.0
    accel: float = 0.0
    steer_angle: float = 0.0
    timestamp: float = 0.0


@dataclass(frozen=True)
class TrajectoryPoint:
    pose: Pose2D
    speed: float
    accel: float = 0.0
    curvature: float = 0.0
    time_offset: float = 0.0


@dataclass(frozen=True)
class Trajectory:
    """Time-stamped poses; ``time_offset`` is relative to ``start_time``.

    A single point is allowed and means "hold here".
    """

    points: tuple[TrajectoryPoint, ...]
    frame_id: str = "map"
    start_time: float = 0.0

    def __post_init__(self):
        pts = tuple(self.points)
        if not pts:
            raise InvalidArgument("trajectory needs at least one point")
        times = [p.time_offset for p in pts]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InvalidArgument("trajectory time offsets must be strictly increasing")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "_times", times)

    @property
    def duration(self) -> float:
        return self.points[-1].time_offset - self.points[0].time_offset

    def interpolate(self, t: float) -> TrajectoryPoint:
        return interpolate(self, t)

    def sample(self, t: float) -> TrajectoryPoint:
        """Interpolate, holding the first/last point outside the covered span."""
        t = min(max(t, self._times[0]), self._times[-1])
        return interpolate(self, t)


def interpolate(traj: Trajectory, t: float) -> TrajectoryPoint:
    """Linear interpolation of a trajectory at offset ``t``.

    Heading follows the shortest arc between the bracketing knots.
    """
    times = traj._times
    if not (times[0] <= t <= times[-1]):
        raise OutOfBounds(f"t={t} outside [{times[0]}, {times[-1]}]")
    i = bisect.bisect_left(times, t)
    if times[i] == t:
        return traj.points[i]
    a, b = traj.points[i - 1], traj.points[i]
    w = (t - a.time_offset) / (b.time_offset - a.time_offset)

    def lerp(u, v):
        return u + w * (v - u)

    heading = a.pose.heading + w * angle_diff(b.pose.heading, a.pose.heading)
    return TrajectoryPoint(
        pose=Pose2D(lerp(a.pose.x, b.pose.x), lerp(a.pose.y, b.pose.y), heading),
        speed=lerp(a.speed, b.speed),
        accel=lerp(a.accel, b.accel),
        curvature=lerp(a.curvature, b.curvature),
        time_offset=t,
    )


def polygon_area(poly) -> float:
    p = np.asarray(poly, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def is_convex_ccw(poly) -> bool:
    p = np.asarray(poly, dtype=float)
    if len(p) < 3 or polygon_area(p) <= 0.0:
        return False
    e = np.roll(p, -1, axis=0) - p
    en = np.roll(e, -1, axis=0)
    cross = e[:, 0] * en[:, 1] - e[:, 1] * en[:, 0]
    return bool(np.all(cross >= -1e-12))


@dataclass(frozen=True)
class Obstacle:
    """Convex CCW footprint in the body frame plus a timed pose schedule."""

    id: str
    footprint: tuple[tuple[float, float], ...]
    predicted_trajectory: tuple[tuple[float, Pose2D], ...]

    def __post_init__(self):
        fp = tuple((float(x), float(y)) for x, y in self.footprint)
        if not is_convex_ccw(fp):
            raise InvalidArgument(f"obstacle {self.id}: footprint must be convex, CCW, non-degenerate")
        sched = tuple((float(t), p) for t, p in self.predicted_trajectory)
        if not sched:
            raise InvalidArgument(f"obstacle {self.id}: empty schedule")
        if any(b[0] <= a[0] for a, b in zip(sched, sched[1:])):
            raise InvalidArgument(f"obstacle {self.id}: schedule times must increase")
        object.__setattr__(self, "footprint", fp)
        object.__setattr__(self, "predicted_trajectory", sched)

    @property
    def is_static(self) -> bool:
        return len(self.predicted_trajectory) == 1

    def pose_at(self, t: float) -> Pose2D:
        sched = self.predicted_trajectory
        if t <= sched[0][0]:
            return sched[0][1]
        if t >= sched[-1][0]:
            return sched[-1][1]
        i = bisect.bisect_right([s[0] for s in sched], t)
        (ta, a), (tb, b) = sched[i - 1], sched[i]
        w = (t - ta) / (tb - ta)
        return Pose2D(a.x + w * (b.x - a.x), a.y + w * (b.y - a.y),
                      a.heading + w * angle_diff(b.heading, a.heading))

    def velocity_at(self, t: float) -> tuple[float, float]:
        sched = self.predicted_trajectory
        if len(sched) == 1 or t < sched[0][0] or t >= sched[-1][0]:
            return 0.0, 0.0
        i = bisect.bisect_right([s[0] for s in sched], t)
        (ta, a), (tb, b) = sched[i - 1], sched[i]
        return (b.x - a.x) / (tb - ta), (b.y - a.y) / (tb - ta)

    def polygon_at(self, t: float) -> np.ndarray:
        return self.pose_at(t).transform_points(np.array(self.footprint))


@dataclass(frozen=True)
class Footprint:
    length: float
    width: float
    rear_axle_to_tail: float

    def __post_init__(self):
        if min(self.length, self.width, self.rear_axle_to_tail) <= 0:
            raise InvalidArgument("footprint dimensions must be positive")
        if self.length <= self.rear_axle_to_tail:
            raise InvalidArgument("length must exceed rear_axle_to_tail")

    def corners(self, pose: Pose2D) -> np.ndarray:
        back, front = -self.rear_axle_to_tail, self.length - self.rear_axle_to_tail
        hw = self.width / 2
        body = np.array([[back, -hw], [front, -hw], [front, hw], [back, hw]])
        return pose.transform_points(body)


def circle_offsets(fp: Footprint, n: int) -> tuple[np.ndarray, float]:
    """Longitudinal circle-centre offsets from the rear axle, and the shared radius."""
    if n < 1:
        raise InvalidArgument("need at least one circle")
    step = fp.length / n
    offsets = -fp.rear_axle_to_tail + step * (np.arange(n) + 0.5)
    radius = math.hypot(step / 2, fp.width / 2)
    return offsets, radius


def footprint_circles(fp: Footprint, pose: Pose2D, n: int) -> list[tuple[tuple[float, float], float]]:
    """``n`` equal circles whose union covers the footprint rectangle at ``pose``."""
    offsets, radius = circle_offsets(fp, n)
    c, s = math.cos(pose.heading), math.sin(pose.heading)
    return [((pose.x + o * c, pose.y + o * s), radius) for o in offsets]


def polygon_signed_distance(points, poly) -> np.ndarray:
    """Signed distance from points (..., 2) to a convex CCW polygon (V, 2).

    Negative inside. Vectorized over the leading point dimensions.
    """
    pts = np.asarray(points, dtype=float)
    v = np.asarray(poly, dtype=float)
    a = v
    e = np.roll(v, -1, axis=0) - v
    elen2 = np.einsum("ij,ij->i", e, e)
    rel = pts[..., None, :] - a  # (..., V, 2)
    u = np.clip(np.einsum("...vj,vj->...v", rel, e) / elen2, 0.0, 1.0)
    closest = rel - u[..., None] * e
    dist = np.sqrt(np.min(np.einsum("...vj,...vj->...v", closest, closest), axis=-1))
    cross = e[:, 0] * rel[..., 1] - e[:, 1] * rel[..., 0]
    inside = np.all(cross >= 0.0, axis=-1)
    return np.where(inside, -dist, dist)


def as_points(seq: Sequence) -> np.ndarray:
    arr = np.asarray(seq, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InvalidArgument("expected a sequence of 2-D points")
    return arr
