"""Frenet-frame lattice planner over a :class:`ReferencePath`.

Candidates are quintic lateral profiles ``d(sigma)``, ``sigma = s - s_start``,
joining layered terminal nodes ``(station, offset, speed)``. Edge costs are
summed along chains and minimized by dynamic programming over the layers.
"""
from __future__ import annotations

import itertools
import math
import sys
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import simpson

from .core import Footprint, Obstacle, Pose2D, angle_diff, circle_offsets, polygon_signed_distance
from .errors import InvalidArgument, NoFeasiblePath, OffPath, OutOfBounds, SingularProjection
from .routenet import ReferencePath

CLEARANCE_SENTINEL = sys.float_info.max
COLLISION_SPACING = 0.2  # sigma step; keeps cartesian spacing under 0.25 m for |d'| < 0.75


@dataclass(frozen=True)
class FrenetState:
    s: float
    d: float
    d_prime: float = 0.0
    d_pprime: float = 0.0
    speed: float = 0.0


# ---------------------------------------------------------------- transforms

def _foot_in_segment(path: ReferencePath, j: int, px: float, py: float) -> float | None:
    """Parameter u in [0, 1] on segment j where the interpolated normal passes through P."""
    x0, y0 = path.x[j], path.y[j]
    dx, dy = path.x[j + 1] - x0, path.y[j + 1] - y0
    th0 = path.heading_unwrapped[j]
    dth = path.heading_unwrapped[j + 1] - th0

    def f(u):
        th = th0 + u * dth
        return (px - x0 - u * dx) * math.cos(th) + (py - y0 - u * dy) * math.sin(th)

    fa, fb = f(0.0), f(1.0)
    if fa < 0.0 or fb > 0.0:
        return None
    if fa == 0.0:
        return 0.0
    if fb == 0.0:
        return 1.0
    lo, hi = 0.0, 1.0
    u = fa / (fa - fb)
    for _ in range(60):
        th = th0 + u * dth
        c, s = math.cos(th), math.sin(th)
        rx, ry = px - x0 - u * dx, py - y0 - u * dy
        fu = rx * c + ry * s
        if fu == 0.0:
            return u
        if fu > 0.0:
            lo = u
        else:
            hi = u
        dfu = -(dx * c + dy * s) + dth * (-rx * s + ry * c)
        un = u - fu / dfu if dfu != 0.0 else 0.5 * (lo + hi)
        if not (lo < un < hi):
            un = 0.5 * (lo + hi)
        if abs(un - u) < 1e-15:
            return un
        u = un
    return u


def project_to_frenet(path: ReferencePath, pose: Pose2D, speed: float = 0.0,
                      max_distance: float = 10.0) -> FrenetState:
    """Frenet coordinates of ``pose``; ``d`` is positive left of the tangent."""
    px, py = pose.x, pose.y
    d2 = (path.x - px) ** 2 + (path.y - py) ** 2
    i = int(np.argmin(d2))
    n = len(path.s)
    best = None
    for j in range(max(i - 2, 0), min(i + 2, n - 1)):
        u = _foot_in_segment(path, j, px, py)
        if u is None:
            continue
        s = path.s[j] + u * (path.s[j + 1] - path.s[j])
        x, y, th, _ = path.at(s)
        d = -(px - x) * math.sin(th) + (py - y) * math.cos(th)
        if best is None or abs(d) < abs(best[1]):
            best = (float(s), float(d), float(th))
    if best is None:
        # beyond either end: clamp to the nearer end
        s = 0.0 if i < n // 2 else path.length
        x, y, th, _ = path.at(s)
        d = -(px - x) * math.sin(th) + (py - y) * math.cos(th)
        if math.hypot(px - x, py - y) > max_distance:
            raise OffPath(f"pose ({px:.3f}, {py:.3f}) is {math.hypot(px - x, py - y):.3f} m off the path")
        best = (s, float(d), float(th))
    s, d, th = best
    if abs(d) > max_distance:
        raise OffPath(f"pose ({px:.3f}, {py:.3f}) is {abs(d):.3f} m off the path")
    return FrenetState(s, d, math.tan(angle_diff(pose.heading, th)), 0.0, speed)


def frenet_to_cartesian(path: ReferencePath, fs: FrenetState) -> Pose2D:
    if not (-1e-9 <= fs.s <= path.length + 1e-9):
        raise OutOfBounds(f"s={fs.s} outside [0, {path.length}]")
    x, y, th, k = path.at(fs.s)
    if abs(fs.d * k) >= 1.0:
        raise SingularProjection(f"d={fs.d} folds over at curvature {k}")
    return Pose2D(float(x - fs.d * math.sin(th)), float(y + fs.d * math.cos(th)),
                  float(th + math.atan(fs.d_prime)))


def frenet_to_cartesian_batch(path: ReferencePath, s, d, dp, dpp):
    """Vectorized map of sampled lateral profiles to ``(x, y, heading, curvature)``."""
    xr, yr, thr, kr = path.at(s)
    x = xr - d * np.sin(thr)
    y = yr + d * np.cos(thr)
    q = 1.0 - kr * d
    dth = np.arctan2(dp, q)
    c = np.cos(dth)
    kappa = ((dpp + kr * dp * np.tan(dth)) * c * c / q + kr) * c / q
    return x, y, thr + dth, kappa


# ------------------------------------------------------------------ lattice

@dataclass(frozen=True)
class LatticeParams:
    horizon_s: float = 25.0
    n_layers: int = 5
    offsets: tuple[float, ...] = (-2.0, -1.0, 0.0, 1.0, 2.0)
    speed_fractions: tuple[float, ...] = (0.5, 1.0)


@dataclass(frozen=True)
class Lattice:
    start: FrenetState
    stations: tuple[float, ...]
    offsets: tuple[float, ...]
    speeds: tuple[float, ...]

    @property
    def nodes_per_layer(self) -> int:
        return len(self.offsets) * len(self.speeds)

    @property
    def n_nodes(self) -> int:
        return len(self.stations) * self.nodes_per_layer

    @property
    def n_edges(self) -> int:
        m = self.nodes_per_layer
        return m + (len(self.stations) - 1) * m * m

    def node(self, idx: int) -> tuple[float, float]:
        """``(offset, speed)`` of a within-layer node index (offset-major)."""
        return self.offsets[idx // len(self.speeds)], self.speeds[idx % len(self.speeds)]


def build_lattice(fs: FrenetState, params: LatticeParams | None = None, *, v_ref: float = 1.0,
                  path_length: float = math.inf, corridor_half_width: float = math.inf,
                  speeds: Sequence[float] | None = None) -> Lattice:
    """Layered sample nodes ahead of ``fs``.

    Offsets with ``|d| >= corridor_half_width`` are dropped. Layers past the
    end of the path are pulled back to it; duplicates collapse.
    """
    p = params or LatticeParams()
    if p.horizon_s <= 0 or p.n_layers < 1:
        raise InvalidArgument("horizon_s must be positive and n_layers >= 1")
    stations = []
    for k in range(1, p.n_layers + 1):
        st = min(fs.s + k * p.horizon_s / p.n_layers, path_length)
        if st > (stations[-1] if stations else fs.s) + 1e-9:
            stations.append(st)
    if not stations:
        raise InvalidArgument("no room for any lattice layer before the path end")
    offsets = tuple(o for o in p.offsets if abs(o) < corridor_half_width)
    if not offsets:
        raise InvalidArgument("corridor excludes every lateral offset")
    if speeds is None:
        speeds = tuple(f * v_ref for f in p.speed_fractions)
    return Lattice(fs, tuple(stations), offsets, tuple(sorted(speeds)))


# ------------------------------------------------------------------- curves

@dataclass(frozen=True)
class CostTerms:
    smoothness: float = 0.0
    end_offset: float = 0.0
    obstacle: float = 0.0
    speed_dev: float = 0.0


@dataclass(frozen=True)
class CostWeights:
    smoothness: float = 5.0
    end_offset: float = 1.0
    obstacle: float = 0.05
    speed_dev: float = 1.0

    def total(self, t: CostTerms) -> float:
        return (self.smoothness * t.smoothness + self.end_offset * t.end_offset
                + self.obstacle * t.obstacle + self.speed_dev * t.speed_dev)


@dataclass(frozen=True)
class CandidateCurve:
    start: FrenetState
    end_s: float
    end_d: float
    target_speed: float
    coeffs: tuple[float, ...]
    terms: CostTerms = field(default_factory=CostTerms)
    total: float = 0.0

    @property
    def length(self) -> float:
        return self.end_s - self.start.s

    def evaluate(self, sigma):
        """``d, d', d''`` at ``sigma`` (arc length from the curve start)."""
        return _poly_eval(np.asarray(self.coeffs)[None, :], np.atleast_1d(sigma)[None, :])


def quintic_coeffs(d0, dp0, dpp0, d1, T):
    """Coefficients of ``d(sigma)`` with the given start state and ``d(T)=d1, d'(T)=d''(T)=0``.

    Broadcasts over array inputs; returns shape ``(..., 6)``.
    """
    d0, dp0, dpp0, d1, T = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (d0, dp0, dpp0, d1, T)))
    h = d1 - d0
    T2 = T * T
    T3 = T2 * T
    c3 = (20 * h - 12 * dp0 * T - 3 * dpp0 * T2) / (2 * T3)
    c4 = (-30 * h + 16 * dp0 * T + 3 * dpp0 * T2) / (2 * T3 * T)
    c5 = (12 * h - 6 * dp0 * T - dpp0 * T2) / (2 * T3 * T2)
    return np.stack([d0, dp0, 0.5 * dpp0, c3, c4, c5], axis=-1)


def _poly_eval(c, sig):
    c = np.asarray(c)
    d = c[:, 0:1] + sig * (c[:, 1:2] + sig * (c[:, 2:3] + sig * (c[:, 3:4] + sig * (c[:, 4:5] + sig * c[:, 5:6]))))
    dp = c[:, 1:2] + sig * (2 * c[:, 2:3] + sig * (3 * c[:, 3:4] + sig * (4 * c[:, 4:5] + sig * 5 * c[:, 5:6])))
    dpp = 2 * c[:, 2:3] + sig * (6 * c[:, 3:4] + sig * (12 * c[:, 4:5] + sig * 20 * c[:, 5:6]))
    return d, dp, dpp


def connect(start: FrenetState, end_s: float, end_d: float, target_speed: float | None = None) -> CandidateCurve:
    """Unique quintic from ``start`` to ``(end_s, end_d)`` with zero end slope and curvature."""
    if not end_s > start.s:
        raise InvalidArgument(f"end_s={end_s} must exceed start s={start.s}")
    c = quintic_coeffs(start.d, start.d_prime, start.d_pprime, end_d, end_s - start.s)
    speed = start.speed if target_speed is None else target_speed
    return CandidateCurve(start, float(end_s), float(end_d), float(speed), tuple(float(v) for v in c))


# ------------------------------------------------------------------ scoring

@dataclass(frozen=True)
class ScoringContext:
    """Everything the edge cost needs besides the curve geometry."""

    path: ReferencePath
    obstacles: tuple[Obstacle, ...] = ()
    footprint: Footprint | None = None
    n_circles: int = 3
    safety_margin: float = 0.3
    influence: float = 10.0
    v_ref: float = 1.0
    target_offset: float = 0.0
    kappa_max: float = math.inf
    t0: float = 0.0
    weights: CostWeights = CostWeights()


def _smoothness(coeffs: np.ndarray, lengths: np.ndarray, intervals: int = 20) -> np.ndarray:
    u = np.linspace(0.0, 1.0, intervals + 1)
    sig = lengths[:, None] * u[None, :]
    _, _, dpp = _poly_eval(coeffs, sig)
    return simpson(dpp * dpp, x=sig, axis=1)


def _relevant_obstacles(ctx: ScoringContext, x: np.ndarray, y: np.ndarray, radius: float):
    """Obstacles that can come within the influence distance of the sampled region."""
    if not ctx.obstacles:
        return []
    pad = ctx.influence + radius
    xmin, xmax, ymin, ymax = x.min() - pad, x.max() + pad, y.min() - pad, y.max() + pad
    keep = []
    for ob in ctx.obstacles:
        polys = [ob.polygon_at(t) for t, _ in ob.predicted_trajectory] if not ob.is_static else [ob.polygon_at(0.0)]
        pts = np.concatenate(polys)
        if pts[:, 0].max() >= xmin and pts[:, 0].min() <= xmax and pts[:, 1].max() >= ymin and pts[:, 1].min() <= ymax:
            keep.append(ob)
    return keep


def sample_clearance(ctx: ScoringContext, x, y, heading, times=None) -> np.ndarray:
    """Footprint-circle clearance to the nearest obstacle at each sample.

    ``times`` (same shape as x) selects predicted obstacle poses; static
    obstacles ignore it. Samples with no obstacle nearby get +inf.
    """
    x = np.asarray(x, dtype=float)
    out = np.full(x.shape, math.inf)
    if ctx.footprint is None:
        return out
    offs, radius = circle_offsets(ctx.footprint, ctx.n_circles)
    obs = _relevant_obstacles(ctx, x, np.asarray(y), radius + float(offs.max(initial=0.0)) + abs(float(offs.min(initial=0.0))))
    if not obs:
        return out
    ch, sh = np.cos(heading), np.sin(heading)
    cx = x[..., None] + offs * ch[..., None]
    cy = y[..., None] + offs * sh[..., None]
    centers = np.stack([cx, cy], axis=-1)  # (..., n, 2)
    for ob in obs:
        if ob.is_static or times is None:
            dist = polygon_signed_distance(centers, ob.polygon_at(ctx.t0 if times is None else 0.0))
        else:
            dist = _moving_distance(ob, centers, np.asarray(times))
        out = np.minimum(out, dist.min(axis=-1) - radius)
    return out


def _moving_distance(ob: Obstacle, centers, times):
    """Signed distance of each circle centre to the obstacle at that sample's time."""
    sched = ob.predicted_trajectory
    ts = np.array([t for t, _ in sched])
    # shortest-arc heading interpolation, as in Obstacle.pose_at
    hs = np.unwrap([p.heading for _, p in sched])
    t = np.broadcast_to(np.asarray(times, dtype=float)[..., None], centers.shape[:-1])
    px = np.interp(t, ts, [p.x for _, p in sched])
    py = np.interp(t, ts, [p.y for _, p in sched])
    ph = np.interp(t, ts, hs)
    c, s = np.cos(ph), np.sin(ph)
    rx, ry = centers[..., 0] - px, centers[..., 1] - py
    # move the query points into the obstacle body frame instead of moving the polygon
    local = np.stack([c * rx + s * ry, -s * rx + c * ry], axis=-1)
    return polygon_signed_distance(local, np.array(ob.footprint))


def _barrier(clear: np.ndarray, margin: float, influence: float) -> np.ndarray:
    """Per-sample barrier summed along the last axis."""
    with np.errstate(divide="ignore"):
        h = np.where(clear < margin, math.inf, np.where(clear < influence, 1.0 / np.maximum(clear, 1e-12) ** 2, 0.0))
    return h.sum(axis=-1)


def _curve_samples(coeffs, s_start, lengths):
    m = int(math.ceil(float(np.max(lengths)) / COLLISION_SPACING)) + 1
    u = np.linspace(0.0, 1.0, m)
    sig = lengths[:, None] * u[None, :]
    d, dp, dpp = _poly_eval(coeffs, sig)
    return s_start[:, None] + sig, d, dp, dpp


def _score_batch(coeffs, s_start, lengths, end_d, speeds, ctx: ScoringContext, s_ego: float):
    """Cost terms for C curves crossed with V target speeds -> arrays (C, V)."""
    C, V = len(coeffs), len(speeds)
    smooth = _smoothness(coeffs, lengths)
    s, d, dp, dpp = _curve_samples(coeffs, s_start, lengths)
    s = np.minimum(s, ctx.path.length)
    x, y, hd, kap = frenet_to_cartesian_batch(ctx.path, s, d, dp, dpp)
    bad_geom = (np.abs(kap).max(axis=1) > ctx.kappa_max) | np.any(1.0 - d * ctx.path.at(s)[3] <= 0.0, axis=1)
    speeds = np.asarray(speeds, dtype=float)
    moving = any(not ob.is_static for ob in ctx.obstacles)
    if moving:
        obst = np.empty((C, V))
        for j, v in enumerate(speeds):
            times = ctx.t0 + (s - s_ego) / max(v, 1e-3)
            obst[:, j] = _barrier(sample_clearance(ctx, x, y, hd, times), ctx.safety_margin, ctx.influence)
    else:
        clear = sample_clearance(ctx, x, y, hd)
        obst = np.repeat(_barrier(clear, ctx.safety_margin, ctx.influence)[:, None], V, axis=1)
    obst[bad_geom, :] = math.inf
    end_off = np.abs(end_d - ctx.target_offset)
    sdev = np.abs(speeds - ctx.v_ref)
    w = ctx.weights
    total = (w.smoothness * smooth[:, None] + w.end_offset * end_off[:, None]
             + w.obstacle * obst + w.speed_dev * sdev[None, :])
    total = np.where(np.isinf(obst), math.inf, total)
    return smooth, end_off, obst, sdev, total


def score(curve: CandidateCurve, ctx: ScoringContext) -> CostTerms:
    """Cost terms of a single candidate; ``weights.total(terms)`` gives the scalar cost."""
    coeffs = np.array([curve.coeffs])
    smooth, end_off, obst, sdev, _ = _score_batch(
        coeffs, np.array([curve.start.s]), np.array([curve.length]), np.array([curve.end_d]),
        [curve.target_speed], ctx, curve.start.s)
    return CostTerms(float(smooth[0]), float(end_off[0]), float(obst[0, 0]), float(sdev[0]))


@dataclass
class ScoredLattice:
    """Per-layer edge costs. ``costs[0]`` has shape (1, m); later layers (m, m)."""

    lattice: Lattice
    costs: list[np.ndarray]
    coeffs: list[np.ndarray]   # per layer: (n_from_offsets, n_offsets, 6)
    terms: list[tuple[np.ndarray, ...]]


def score_lattice(lattice: Lattice, ctx: ScoringContext) -> ScoredLattice:
    """Score every edge of the lattice in one vectorized pass per layer."""
    offs = np.array(lattice.offsets)
    nO, nV = len(offs), len(lattice.speeds)
    st = lattice.start
    prev_s = st.s
    costs, coeffs_l, terms_l = [], [], []
    for k, s_k in enumerate(lattice.stations):
        T = s_k - prev_s
        if k == 0:
            c = quintic_coeffs(st.d, st.d_prime, st.d_pprime, offs, T)[None, :, :]
        else:
            c = quintic_coeffs(offs[:, None], 0.0, 0.0, offs[None, :], T)
        flat = c.reshape(-1, 6)
        n_from = c.shape[0]
        end_d = np.tile(offs, n_from)
        smooth, end_off, obst, sdev, total = _score_batch(
            flat, np.full(len(flat), prev_s), np.full(len(flat), T), end_d, lattice.speeds, ctx, st.s)
        # edge cost from any speed of the source offset to node (j, v)
        tot = total.reshape(n_from, nO * nV)
        if k == 0:
            cost = tot
        else:
            cost = np.repeat(tot, nV, axis=0)
        costs.append(cost)
        coeffs_l.append(c)
        terms_l.append((smooth.reshape(n_from, nO), end_off.reshape(n_from, nO),
                        obst.reshape(n_from, nO, nV), sdev))
        prev_s = s_k
    return ScoredLattice(lattice, costs, coeffs_l, terms_l)


# ------------------------------------------------------------------- search

@dataclass(frozen=True)
class Chain:
    nodes: tuple[int, ...]          # within-layer node index per layer
    total_cost: float
    curves: tuple[CandidateCurve, ...]


def _tie_key(lattice: Lattice, idx: int):
    d, v = lattice.node(idx)
    return (abs(d), v, d)


def search_min_cost(lattice: Lattice, costs: Sequence[np.ndarray], scored: ScoredLattice | None = None) -> Chain:
    """Minimum-cost chain through the layered DAG by dynamic programming.

    Equal costs resolve toward the smaller ``|d|``, then the lower speed.
    """
    m = lattice.nodes_per_layer
    order = sorted(range(m), key=lambda i: _tie_key(lattice, i))
    best = np.asarray(costs[0], dtype=float).reshape(-1).copy()
    back = []
    for cost in costs[1:]:
        cand = best[:, None] + cost
        nxt = np.empty(m)
        arg = np.empty(m, dtype=int)
        for j in range(m):
            col = cand[:, j]
            mn = col.min()
            arg[j] = next(i for i in order if col[i] == mn)
            nxt[j] = mn
        back.append(arg)
        best = nxt
    final = best.min()
    if not math.isfinite(final):
        raise NoFeasiblePath("every lattice chain is infeasible")
    last = next(i for i in order if best[i] == final)
    nodes = [last]
    for arg in reversed(back):
        nodes.append(int(arg[nodes[-1]]))
    nodes.reverse()
    return Chain(tuple(nodes), float(final), tuple(_materialize(lattice, nodes, costs, scored)))


def _materialize(lattice: Lattice, nodes, costs, scored):
    out = []
    state = lattice.start
    prev = None
    nV = len(lattice.speeds)
    for k, idx in enumerate(nodes):
        d, v = lattice.node(idx)
        curve = connect(state, lattice.stations[k], d, v)
        edge_cost = float(costs[k][0 if k == 0 else prev, idx])
        terms = CostTerms()
        if scored is not None:
            sm, eo, ob, sd = scored.terms[k]
            i_from = 0 if k == 0 else prev // nV
            j_off, j_v = idx // nV, idx % nV
            terms = CostTerms(float(sm[i_from, j_off]), float(eo[i_from, j_off]),
                              float(ob[i_from, j_off, j_v]), float(sd[j_v]))
        out.append(CandidateCurve(state, curve.end_s, d, v, curve.coeffs, terms, edge_cost))
        state = FrenetState(lattice.stations[k], d, 0.0, 0.0, v)
        prev = idx
    return out


def brute_force_min_cost(costs: Sequence[np.ndarray]) -> float:
    """Exhaustive minimum over every chain, accumulating in layer order."""
    m = np.asarray(costs[0]).reshape(-1).shape[0]
    best = math.inf
    first = np.asarray(costs[0]).reshape(-1)
    for chain in itertools.product(range(m), repeat=len(costs)):
        tot = first[chain[0]]
        for k in range(1, len(chain)):
            tot = tot + costs[k][chain[k - 1], chain[k]]
        if tot < best:
            best = tot
    return float(best)


# --------------------------------------------------------------- collision

@dataclass(frozen=True)
class CollisionResult:
    feasible: bool
    min_clearance: float


def chain_samples(path: ReferencePath, curves: Sequence[CandidateCurve], spacing: float = COLLISION_SPACING):
    """Cartesian samples ``(s, x, y, heading, kappa, speed)`` along a chain of curves."""
    parts = []
    for i, cv in enumerate(curves):
        m = max(int(math.ceil(cv.length / spacing)) + 1, 2)
        sig = np.linspace(0.0, cv.length, m)
        if i > 0:
            sig = sig[1:]
        d, dp, dpp = cv.evaluate(sig)
        s = np.minimum(cv.start.s + sig, path.length)
        x, y, hd, k = frenet_to_cartesian_batch(path, s, d[0], dp[0], dpp[0])
        parts.append((s, x, y, hd, k, np.full(len(sig), cv.target_speed)))
    return tuple(np.concatenate(cols) for cols in zip(*parts))


def check_collision(curves: CandidateCurve | Sequence[CandidateCurve], ctx: ScoringContext) -> CollisionResult:
    """Clearance of the footprint circles along the curve(s) against predicted obstacles."""
    if isinstance(curves, CandidateCurve):
        curves = [curves]
    s, x, y, hd, _, v = chain_samples(ctx.path, curves)
    s0 = curves[0].start.s
    times = None
    if any(not ob.is_static for ob in ctx.obstacles):
        times = ctx.t0 + (s - s0) / np.maximum(v, 1e-3)
    clear = sample_clearance(ctx, x, y, hd, times)
    mn = float(clear.min()) if clear.size else math.inf
    if not math.isfinite(mn):
        return CollisionResult(True, CLEARANCE_SENTINEL)
    return CollisionResult(mn >= ctx.safety_margin, mn)
