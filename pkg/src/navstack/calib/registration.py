"""Closed-form plane-based initialization and point-to-plane ICP refinement."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ..errors import DegenerateCorner
from .cloud import PointCloud3D, RigidTransform3D, orthonormalize, rotvec_to_matrix
from .planes import PlaneMatch, PlaneModel, RansacParams, fit_corner_planes, match_planes

log = logging.getLogger(__name__)


def kabsch_rotation(src, dst) -> np.ndarray:
    """Rotation ``R`` minimizing ``sum |dst_i - R src_i|^2``."""
    Hm = np.asarray(src, dtype=float).T @ np.asarray(dst, dtype=float)
    U, _, Vt = np.linalg.svd(Hm)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(Vt.T @ U.T)) or 1.0])
    return Vt.T @ D @ U.T


def kabsch_init(a, b, match: PlaneMatch | None = None) -> RigidTransform3D:
    """Transform taking frame ``b`` into frame ``a`` from three matched planes.

    ``a`` and ``b`` are plane triples; ``b`` is put into ``a``'s order (and
    orientation) by ``match`` when given, else assumed already matched.
    """
    Na = np.array([pl.normal for pl in a])
    da = np.array([pl.offset for pl in a])
    if match is None:
        Nb = np.array([pl.normal for pl in b])
        db = np.array([pl.offset for pl in b])
    else:
        Nb, db = match.oriented(b)
    if np.linalg.cond(Na) > 1e8 or np.linalg.cond(Nb) > 1e8:
        raise DegenerateCorner("plane normals are linearly dependent")
    R = orthonormalize(kabsch_rotation(Nb, Na))
    t = np.linalg.solve(Na, da - db)
    return RigidTransform3D(R, t)


def estimate_normals(pts, tree: cKDTree, k: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """PCA normals and planarity (1 - smallest/middle eigenvalue ratio) from ``k`` neighbors."""
    k = min(k, len(pts))
    _, idx = tree.query(pts, k=k)
    nb = pts[idx]
    c = nb - nb.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", c, c) / k
    w, v = np.linalg.eigh(cov)
    normals = v[:, :, 0]
    planarity = 1.0 - w[:, 0] / np.maximum(w[:, 1], 1e-18)
    return normals, planarity


@dataclass(frozen=True)
class IcpParams:
    max_iters: int = 30
    tol: float = 1e-5              # stop when the update norm (rad, m) is below this
    max_corr_dist: float = 0.3
    k_normals: int = 10
    min_planarity: float = 0.95
    max_normal_angle: float = 20.0  # degrees between paired local planes
    max_points: int = 4000
    patience: int = 3
    trim_sigma: float = 3.0
    plateau_rel: float = 1e-2
    seed: int = 0


@dataclass
class IcpResult:
    transform: RigidTransform3D
    rms_history: list[float] = field(default_factory=list)  # initial RMS then each accepted iteration
    iterations: int = 0
    converged: bool = False
    diverged: bool = False


class _Target:
    def __init__(self, pts, params: IcpParams):
        self.tree = cKDTree(pts)
        self.pts = pts
        self.normals, plan = estimate_normals(pts, self.tree, params.k_normals)
        self.good = plan >= params.min_planarity
        self.max_d = params.max_corr_dist
        self.min_cos = np.cos(np.radians(params.max_normal_angle))

    def pairs(self, moved, src_normals):
        """Nearest neighbors within range whose local planes agree with the source's."""
        dist, idx = self.tree.query(moved, distance_upper_bound=self.max_d)
        ok = np.isfinite(dist)
        j = idx[ok]
        ok[ok] = self.good[j] & (np.abs(np.einsum("ij,ij->i", self.normals[j], src_normals[ok])) >= self.min_cos)
        return ok, idx

    def rms(self, moved, src_normals) -> float:
        ok, idx = self.pairs(moved, src_normals)
        if not ok.any():
            return float("inf")
        r = np.einsum("ij,ij->i", moved[ok] - self.pts[idx[ok]], self.normals[idx[ok]])
        return float(np.sqrt(np.mean(r * r)))


def icp_refine(cloud_a: PointCloud3D, cloud_b: PointCloud3D, init: RigidTransform3D,
               params: IcpParams | None = None) -> IcpResult:
    """Point-to-plane ICP of ``b`` onto ``a`` starting at ``init``.

    Returns the best transform seen; its RMS never exceeds the initial one.
    After ``patience`` consecutive non-improving steps it stops; ``diverged``
    is set when the error then sits above the best by more than ``plateau_rel``.
    """
    p = params or IcpParams()
    target = _Target(cloud_a.points, p)
    src = cloud_b.points
    src_n, src_plan = estimate_normals(src, cKDTree(src), p.k_normals)
    keep = src_plan >= p.min_planarity
    if keep.sum() > p.max_points:
        rng = np.random.default_rng(p.seed)
        keep[np.flatnonzero(keep)[rng.permutation(keep.sum())[p.max_points:]]] = False
    src, src_n = src[keep], src_n[keep]

    cur = init
    best, best_rms = init, target.rms(init.apply(src), src_n @ init.R.T)
    history = [best_rms]
    stale = 0
    result = IcpResult(best, history)
    for it in range(1, p.max_iters + 1):
        moved = cur.apply(src)
        ok, idx = target.pairs(moved, src_n @ cur.R.T)
        if ok.sum() < 6:
            break
        q, n, m = target.pts[idx[ok]], target.normals[idx[ok]], moved[ok]
        r = np.einsum("ij,ij->i", m - q, n)
        # robust trim for the solve only: drops pairs that straddle plane junctions
        inl = np.abs(r) <= p.trim_sigma * 1.4826 * np.median(np.abs(r)) + 1e-12
        if inl.sum() >= 6:
            q, n, m, r = q[inl], n[inl], m[inl], r[inl]
        J = np.hstack([np.cross(m, n), n])
        JtJ = J.T @ J
        try:
            xi = np.linalg.solve(JtJ, -J.T @ r)
        except np.linalg.LinAlgError:
            xi = np.linalg.lstsq(JtJ, -J.T @ r, rcond=None)[0]
        step = RigidTransform3D(rotvec_to_matrix(xi[:3]), xi[3:])
        cur = step.compose(cur)
        rms = target.rms(cur.apply(src), src_n @ cur.R.T)
        result.iterations = it
        if rms < best_rms:
            best, best_rms = cur, rms
            history.append(rms)
            stale = 0
        else:
            stale += 1
        if np.linalg.norm(xi) < p.tol:
            result.converged = True
            break
        if stale >= p.patience:
            # a flat error at noise level is a plateau; a rising one is divergence
            if rms > best_rms * (1.0 + p.plateau_rel):
                result.diverged = True
                log.warning("ICP diverging: RMS %.4g above best %.4g", rms, best_rms)
            else:
                result.converged = True
            break
    result.transform = best
    return result


@dataclass
class PairCalibration:
    transform: RigidTransform3D
    init: RigidTransform3D
    planes_a: tuple[PlaneModel, ...]
    planes_b: tuple[PlaneModel, ...]
    match: PlaneMatch
    icp: IcpResult


def calibrate_pair(cloud_a: PointCloud3D, cloud_b: PointCloud3D, *, ransac: RansacParams | None = None,
                   icp: IcpParams | None = None, prior_rotation=None) -> PairCalibration:
    """Extrinsic taking ``b``'s frame into ``a``'s: fit, match, initialize, refine."""
    pa = fit_corner_planes(cloud_a, ransac)
    pb = fit_corner_planes(cloud_b, ransac)
    match = match_planes(pa, pb, prior_rotation)
    init = kabsch_init(pa, pb, match)
    res = icp_refine(cloud_a, cloud_b, init, icp)
    return PairCalibration(res.transform, init, pa, pb, match, res)
