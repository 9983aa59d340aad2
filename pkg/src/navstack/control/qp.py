"""Dense primal active-set solver for small strictly convex QPs.

    minimize    0.5 x'Hx + g'x
    subject to  lo <= A x <= hi

Starting from a feasible point, each iteration either takes a step along
the equality-constrained Newton direction (clipped at the first blocking
constraint) or releases the working constraint with the most negative
multiplier. The objective never increases.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InfeasibleQP

FEAS_TOL = 1e-9


@dataclass
class QpResult:
    x: np.ndarray
    objective: float
    iterations: int
    converged: bool
    kkt_residual: float
    history: list[float] = field(default_factory=list)
    active: dict[int, int] = field(default_factory=dict)


def _objective(H, g, x):
    return float(0.5 * x @ H @ x + g @ x)


def solve_qp(H, g, A, lo, hi, x0, *, max_iter: int = 100, tol: float = 1e-6) -> QpResult:
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    A = np.asarray(A, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    x = np.array(x0, dtype=float)
    n = len(x)
    if np.any(lo > hi + FEAS_TOL):
        raise InfeasibleQP("constraint set is empty (lo > hi)")
    ax = A @ x
    if np.any(ax < lo - FEAS_TOL) or np.any(ax > hi + FEAS_TOL):
        raise InfeasibleQP("starting point violates the constraints")

    work: dict[int, int] = {}  # row -> +1 upper / -1 lower
    for i in np.flatnonzero(np.isclose(ax, hi, atol=1e-12, rtol=0) & np.isfinite(hi)):
        work[int(i)] = 1
    for i in np.flatnonzero(np.isclose(ax, lo, atol=1e-12, rtol=0) & np.isfinite(lo)):
        if int(i) not in work:
            work[int(i)] = -1
    history = [_objective(H, g, x)]
    lam = np.zeros(0)
    rows: list[int] = []
    scale = max(1.0, float(np.abs(H).max()))

    for it in range(1, max_iter + 1):
        rows = sorted(work)
        grad = H @ x + g
        Aw = A[rows]
        m = len(rows)
        K = np.zeros((n + m, n + m))
        K[:n, :n] = H
        K[:n, n:] = Aw.T
        K[n:, :n] = Aw
        rhs = np.concatenate([-grad, np.zeros(m)])
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        p, lam = sol[:n], sol[n:]

        if np.max(np.abs(p), initial=0.0) <= 1e-12 * max(1.0, float(np.abs(x).max(initial=0.0))):
            signed = np.array([work[r] for r in rows]) * lam if m else np.zeros(0)
            if m == 0 or signed.min() >= -tol:
                res = _kkt_residual(H, g, A, lo, hi, x, rows, lam, work)
                return QpResult(x, history[-1], it, res <= tol * scale, res, history, dict(work))
            drop = rows[int(np.argmin(signed))]
            del work[drop]
            history.append(history[-1])
            continue

        ap = A @ p
        ax = A @ x
        free = np.ones(len(ap), dtype=bool)
        free[rows] = False
        mu = free & (ap > 1e-14) & np.isfinite(hi)
        md = free & (ap < -1e-14) & np.isfinite(lo)
        up = np.divide(hi - ax, ap, out=np.full(len(ap), np.inf), where=mu)
        dn = np.divide(lo - ax, ap, out=np.full(len(ap), np.inf), where=md)
        alpha, block = 1.0, None
        iu, il = int(np.argmin(up)), int(np.argmin(dn))
        if up[iu] < alpha:
            alpha, block = max(float(up[iu]), 0.0), (iu, 1)
        if dn[il] < alpha:
            alpha, block = max(float(dn[il]), 0.0), (il, -1)
        x = x + alpha * p
        history.append(_objective(H, g, x))
        if block is not None:
            work[block[0]] = block[1]

    rows = sorted(work)
    res = _kkt_residual(H, g, A, lo, hi, x, rows, lam if len(lam) == len(rows) else None, work)
    return QpResult(x, history[-1], max_iter, res <= tol * scale, res, history, dict(work))


def _kkt_residual(H, g, A, lo, hi, x, rows, lam, work) -> float:
    """Max of stationarity, primal and dual infeasibility."""
    grad = H @ x + g
    if rows and lam is not None and len(lam) == len(rows):
        stat = grad + A[rows].T @ lam
        dual = max(0.0, -float(np.min(np.array([work[r] for r in rows]) * lam)))
    elif rows:
        lam = np.linalg.lstsq(A[rows].T, -grad, rcond=None)[0]
        stat = grad + A[rows].T @ lam
        dual = max(0.0, -float(np.min(np.array([work[r] for r in rows]) * lam)))
    else:
        stat, dual = grad, 0.0
    ax = A @ x
    primal = max(0.0, float(np.max(lo - ax, initial=0.0)), float(np.max(ax - hi, initial=0.0)))
    return max(float(np.abs(stat).max(initial=0.0)), primal, dual)
