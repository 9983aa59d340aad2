"""Corner plane extraction by sequential RANSAC and cross-sensor plane matching."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..errors import AmbiguousMatch, DegenerateCorner, InsufficientStructure, InvalidArgument
from .cloud import PointCloud3D

GRAM_MIN = 0.1
MATCH_MIN = 1.5


@dataclass(frozen=True, eq=False)
class PlaneModel:
    """Plane ``n . p = d`` with ``d >= 0``."""

    normal: np.ndarray
    offset: float
    inliers: np.ndarray = np.zeros(0, dtype=int)

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float).reshape(3)
        norm = np.linalg.norm(n)
        if not norm > 0:
            raise InvalidArgument("plane normal must be non-zero")
        n = n / norm
        d = float(self.offset) / norm
        if d < 0:
            n, d = -n, -d
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", d)
        object.__setattr__(self, "inliers", np.asarray(self.inliers, dtype=int))

    def distance(self, pts) -> np.ndarray:
        return np.asarray(pts, dtype=float) @ self.normal - self.offset


@dataclass(frozen=True)
class RansacParams:
    iters: int = 500
    inlier_tol: float = 0.03
    min_inliers: int = 300
    refine_rounds: int = 3
    seed: int = 0


def fit_plane_lsq(pts) -> tuple[np.ndarray, float]:
    c = pts.mean(axis=0)
    _, _, Vt = np.linalg.svd(pts - c, full_matrices=False)
    n = Vt[-1]
    return n, float(n @ c)


def _ransac_plane(pts, params: RansacParams, rng) -> np.ndarray:
    """Inlier mask of the best plane among ``iters`` random triples."""
    m = len(pts)
    best_mask, best_count = None, -1
    triples = rng.integers(0, m, size=(params.iters, 3))
    p0, p1, p2 = pts[triples[:, 0]], pts[triples[:, 1]], pts[triples[:, 2]]
    normals = np.cross(p1 - p0, p2 - p0)
    norms = np.linalg.norm(normals, axis=1)
    ok = norms > 1e-9
    normals[ok] /= norms[ok, None]
    offsets = np.einsum("ij,ij->i", normals, p0)
    # score in chunks to bound memory
    for start in range(0, params.iters, 64):
        sl = slice(start, start + 64)
        dist = np.abs(pts @ normals[sl].T - offsets[sl])
        counts = np.where(ok[sl], (dist <= params.inlier_tol).sum(axis=0), -1)
        j = int(np.argmax(counts))
        if counts[j] > best_count:
            best_count = int(counts[j])
            best_mask = dist[:, j] <= params.inlier_tol
    return best_mask


def _trimmed_fit(pts, tol: float, rounds: int = 20):
    """Least-squares plane refit that drops points beyond 3 robust sigmas.

    Points of a neighboring plane near the junction sit inside the RANSAC
    tolerance and tilt a plain fit; they stand out in the residual spread.
    """
    n, d = fit_plane_lsq(pts)
    keep = np.ones(len(pts), dtype=bool)
    for _ in range(rounds):
        r = np.abs(pts @ n - d)
        thr = min(tol, max(3.0 * 1.4826 * float(np.median(r)), 1e-12))
        new = r <= thr
        if new.sum() < 3 or np.array_equal(new, keep):
            break
        keep = new
        n, d = fit_plane_lsq(pts[keep])
    return n, d


def fit_corner_planes(cloud: PointCloud3D, ransac: RansacParams | None = None) -> tuple[PlaneModel, ...]:
    """Three dominant planes of a corner scene, in extraction order.

    Each RANSAC plane is refit by least squares, inliers are reselected with
    the same tolerance and the fit repeated a few times; the final fit trims
    outliers by their median residual.
    """
    p = ransac or RansacParams()
    rng = np.random.default_rng(p.seed)
    pts = cloud.points
    remaining = np.arange(len(pts))
    planes = []
    for _ in range(3):
        if len(remaining) < max(p.min_inliers, 3):
            break
        sub = pts[remaining]
        mask = _ransac_plane(sub, p, rng)
        if mask is None or mask.sum() < p.min_inliers:
            break
        for _ in range(p.refine_rounds):
            n, d = fit_plane_lsq(sub[mask])
            new = np.abs(sub @ n - d) <= p.inlier_tol
            if new.sum() < 3 or np.array_equal(new, mask):
                break
            mask = new
        n, d = _trimmed_fit(sub[mask], p.inlier_tol)
        planes.append(PlaneModel(n, d, remaining[mask]))
        remaining = remaining[~mask]
    if len(planes) < 3:
        raise InsufficientStructure(f"found {len(planes)} planes with >= {p.min_inliers} inliers, need 3")
    check_corner(planes)
    return tuple(planes)


def check_corner(planes) -> float:
    N = np.array([pl.normal for pl in planes])
    g = float(np.linalg.det(N @ N.T))
    if g < GRAM_MIN:
        raise DegenerateCorner(f"plane normals nearly dependent (Gram determinant {g:.3g})")
    return g


@dataclass(frozen=True)
class PlaneMatch:
    perm: tuple[int, int, int]     # a[i] corresponds to b[perm[i]]
    signs: tuple[int, int, int]
    score: float

    def apply(self, b) -> tuple[PlaneModel, ...]:
        """``b`` reordered to match ``a``; sign flips keep ``d >= 0`` so only the order changes."""
        return tuple(b[j] for j in self.perm)

    def oriented(self, b) -> tuple[np.ndarray, np.ndarray]:
        """Signed normals and offsets of ``b`` in ``a``'s order."""
        n = np.array([s * b[j].normal for j, s in zip(self.perm, self.signs)])
        d = np.array([s * b[j].offset for j, s in zip(self.perm, self.signs)])
        return n, d


def match_planes(a, b, prior_rotation=None) -> PlaneMatch:
    """Correspondence of ``b``'s planes to ``a``'s maximizing total normal alignment.

    ``prior_rotation`` (b to a) helps when the sensors face very different
    directions. Only sign patterns that preserve handedness are allowed.
    """
    if len(a) != 3 or len(b) != 3:
        raise InvalidArgument("match_planes needs two plane triples")
    check_corner(a)
    check_corner(b)
    Na = np.array([pl.normal for pl in a])
    Nb = np.array([pl.normal for pl in b])
    Rb = Nb if prior_rotation is None else Nb @ np.asarray(prior_rotation, dtype=float).T
    det_a = np.linalg.det(Na)
    best = None
    for perm in itertools.permutations(range(3)):
        dots = np.array([Na[i] @ Rb[perm[i]] for i in range(3)])
        for signs in itertools.product((1, -1), repeat=3):
            if np.linalg.det(np.array(signs)[:, None] * Rb[list(perm)]) * det_a <= 0:
                continue
            score = float(np.sum(np.array(signs) * dots))
            if best is None or score > best.score + 1e-12:
                best = PlaneMatch(perm, signs, score)
    if best is None or best.score < MATCH_MIN:
        raise AmbiguousMatch(f"best plane correspondence score {best.score if best else 0:.3f} < {MATCH_MIN}")
    return best
