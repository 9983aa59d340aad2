"""Trajectory-tracking MPC.

Two variants share the QP solver: a combined kinematic-bicycle MPC that
outputs steering and speed, and a lateral MPC on the linear dynamic
bicycle error model that outputs steering only (longitudinal then comes
from a PID).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from ..core import Trajectory, VehicleState, normalize_angle
from ..errors import InfeasibleQP, InvalidArgument, LowSpeed
from .qp import QpResult, solve_qp


@dataclass(frozen=True)
class KinematicModel:
    wheelbase: float = 1.9
    steer_limit: float = 0.55
    steer_rate_limit: float = 0.8

    def __post_init__(self):
        if self.wheelbase <= 0:
            raise InvalidArgument("wheelbase must be positive")


@dataclass(frozen=True)
class DynamicModel:
    mass: float = 800.0
    iz: float = 700.0
    cf: float = 40000.0
    cr: float = 40000.0
    lf: float = 0.95
    lr: float = 0.95

    def __post_init__(self):
        if min(self.mass, self.iz, self.cf, self.cr, self.lf, self.lr) <= 0:
            raise InvalidArgument("dynamic model parameters must be positive")

    @property
    def wheelbase(self) -> float:
        return self.lf + self.lr

    def understeer_gradient(self) -> float:
        L = self.wheelbase
        return self.mass * (self.lr / (self.cf * L) - self.lf / (self.cr * L))


@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 20
    dt: float = 0.05
    # kinematic: state error (x, y, heading); inputs (speed, steer)
    q: tuple[float, float, float] = (10.0, 10.0, 5.0)
    r: tuple[float, float] = (0.5, 0.5)
    r_rate: tuple[float, float] = (1.0, 5.0)
    v_min: float = 0.0
    v_max: float = 5.0
    a_min: float = -2.0
    a_max: float = 1.0
    # dynamic lateral: (e_y, e_y rate, e_psi, e_psi rate); steer
    q_dyn: tuple[float, float, float, float] = (10.0, 0.1, 5.0, 0.1)
    r_dyn: float = 0.5
    r_rate_dyn: float = 5.0
    v_eps: float = 0.5
    max_iter: int = 100
    tol: float = 1e-6

    def __post_init__(self):
        if self.horizon < 2 or self.dt <= 0:
            raise InvalidArgument("MPC needs horizon >= 2 and dt > 0")
        weights = (*self.q, *self.r, *self.r_rate)
        if min(weights) < 0 or max(weights) == 0:
            raise InvalidArgument("MPC weights must be non-negative and not all zero")


@dataclass(frozen=True)
class ControlCommand:
    steer_angle: float
    speed_cmd: float | None = None
    accel_cmd: float | None = None
    mode: str = "kinematic"
    qp_iterations: int = 0
    qp_converged: bool = True


class TrajArrays:
    """Array view of a trajectory in absolute time and along its own arc length."""

    def __init__(self, traj: Trajectory):
        pts = traj.points
        self.t = np.array([p.time_offset for p in pts]) + traj.start_time
        self.x = np.array([p.pose.x for p in pts])
        self.y = np.array([p.pose.y for p in pts])
        self.th = np.unwrap(np.array([p.pose.heading for p in pts]))
        self.v = np.array([p.speed for p in pts])
        self.k = np.array([p.curvature for p in pts])
        self.a = np.array([p.accel for p in pts])
        seg = np.hypot(np.diff(self.x), np.diff(self.y))
        self.s = np.concatenate([[0.0], np.cumsum(seg)])

    def at_time(self, t):
        if len(self.t) == 1:
            n = np.size(t)
            return tuple(np.full(n, a[0]) for a in (self.x, self.y, self.th, self.v, self.k))
        return tuple(np.interp(t, self.t, a) for a in (self.x, self.y, self.th, self.v, self.k))

    def at_s(self, s):
        if len(self.s) == 1 or self.s[-1] <= 0:
            n = np.size(s)
            return tuple(np.full(n, a[0]) for a in (self.x, self.y, self.th, self.v, self.k))
        return tuple(np.interp(s, self.s, a) for a in (self.x, self.y, self.th, self.v, self.k))

    def project(self, x: float, y: float) -> float:
        """Arc length of the closest point on the trajectory polyline."""
        if len(self.s) == 1:
            return 0.0
        ax, ay = self.x[:-1], self.y[:-1]
        dx, dy = np.diff(self.x), np.diff(self.y)
        l2 = dx * dx + dy * dy
        u = np.clip(((x - ax) * dx + (y - ay) * dy) / np.where(l2 > 0, l2, 1.0), 0.0, 1.0)
        px, py = ax + u * dx, ay + u * dy
        i = int(np.argmin((px - x) ** 2 + (py - y) ** 2))
        return float(self.s[i] + u[i] * math.sqrt(l2[i]))


def _rate_constraints(n_in: int, N: int, prev, box_lo, box_hi, rate_lo, rate_hi):
    """Rows for box and rate limits; the first step's rate limit is merged into its box row."""
    nv = n_in * N
    rows, lo, hi = [], [], []
    for k in range(N):
        for j in range(n_in):
            r = np.zeros(nv)
            r[k * n_in + j] = 1.0
            l, h = box_lo[j], box_hi[j]
            if k == 0:
                l, h = max(l, prev[j] + rate_lo[j]), min(h, prev[j] + rate_hi[j])
            rows.append(r)
            lo.append(l)
            hi.append(h)
    for k in range(1, N):
        for j in range(n_in):
            r = np.zeros(nv)
            r[k * n_in + j] = 1.0
            r[(k - 1) * n_in + j] = -1.0
            rows.append(r)
            lo.append(rate_lo[j])
            hi.append(rate_hi[j])
    lo, hi = np.array(lo), np.array(hi)
    if np.any(lo[: nv] > hi[: nv]):
        raise InfeasibleQP("previous input is outside reach of the input bounds")
    x0 = np.tile(np.clip(prev, lo[:n_in], hi[:n_in]), N)
    return np.array(rows), lo, hi, x0


def _diff_matrix(n_in: int, N: int) -> np.ndarray:
    D = np.eye(n_in * N)
    for k in range(1, N):
        for j in range(n_in):
            D[k * n_in + j, (k - 1) * n_in + j] = -1.0
    return D


@dataclass
class KinematicProblem:
    """Condensed QP data, kept for inspection and tests."""

    H: np.ndarray
    g: np.ndarray
    A: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    x0: np.ndarray
    e0: np.ndarray
    u_ref: np.ndarray
    A_k: list
    B_k: list
    c_k: list


def build_kinematic_problem(ref: Trajectory, state: VehicleState, model: KinematicModel, cfg: MpcConfig,
                            prev=None, now: float | None = None) -> KinematicProblem:
    N, dt, L = cfg.horizon, cfg.dt, model.wheelbase
    now = state.timestamp if now is None else now
    arr = ref if isinstance(ref, TrajArrays) else TrajArrays(ref)
    times = now + dt * np.arange(N + 1)
    xr, yr, thr, vr, kr = arr.at_time(times)
    dr = np.clip(np.arctan(L * kr), -model.steer_limit, model.steer_limit)
    p = state.pose
    e0 = np.array([p.x - xr[0], p.y - yr[0], normalize_angle(p.heading - thr[0])])

    nx, nu = 3, 2
    M = np.zeros((nx, nu * N))
    P = np.eye(nx)
    w = np.zeros(nx)
    Gam, Phi, W = [], [], []
    A_l, B_l, c_l = [], [], []
    for k in range(N):
        st, ct = math.sin(thr[k]), math.cos(thr[k])
        A = np.eye(nx)
        A[0, 2] = -dt * vr[k] * st
        A[1, 2] = dt * vr[k] * ct
        B = np.zeros((nx, nu))
        B[0, 0] = dt * ct
        B[1, 0] = dt * st
        B[2, 0] = dt * math.tan(dr[k]) / L
        B[2, 1] = dt * vr[k] / (L * math.cos(dr[k]) ** 2)
        c = np.array([xr[k] + dt * vr[k] * ct - xr[k + 1],
                      yr[k] + dt * vr[k] * st - yr[k + 1],
                      thr[k] + dt * vr[k] * math.tan(dr[k]) / L - thr[k + 1]])
        M = A @ M
        M[:, k * nu:(k + 1) * nu] += B
        P = A @ P
        w = A @ w + c
        Gam.append(M.copy())
        Phi.append(P.copy())
        W.append(w.copy())
        A_l.append(A)
        B_l.append(B)
        c_l.append(c)
    Gam = np.vstack(Gam)
    E_free = np.concatenate([Ph @ e0 + ww for Ph, ww in zip(Phi, W)])
    u_ref = np.column_stack([vr[:N], dr[:N]]).reshape(-1)
    Qb = np.diag(np.tile(cfg.q, N))
    Rb = np.diag(np.tile(cfg.r, N))
    Sb = np.diag(np.tile(cfg.r_rate, N))
    D = _diff_matrix(nu, N)
    if prev is None:
        prev = (state.speed, state.steer_angle)
    prev = np.array(prev, dtype=float)
    b = np.zeros(nu * N)
    b[:nu] = prev
    E0 = E_free - Gam @ u_ref
    H = 2.0 * (Gam.T @ Qb @ Gam + Rb + D.T @ Sb @ D)
    g = 2.0 * (Gam.T @ Qb @ E0 - Rb @ u_ref - D.T @ Sb @ b)
    Acon, lo, hi, x0 = _rate_constraints(
        nu, N, prev, (cfg.v_min, -model.steer_limit), (cfg.v_max, model.steer_limit),
        (cfg.a_min * dt, -model.steer_rate_limit * dt), (cfg.a_max * dt, model.steer_rate_limit * dt))
    return KinematicProblem(H, g, Acon, lo, hi, x0, e0, u_ref, A_l, B_l, c_l)


def mpc_kinematic(ref: Trajectory, state: VehicleState, model: KinematicModel, cfg: MpcConfig | None = None,
                  prev=None, now: float | None = None, details: bool = False):
    """First input ``(steer, speed)`` of the linearized kinematic-bicycle MPC.

    ``prev`` is the previously applied ``(speed, steer)``; defaults to the
    measured state. With ``details=True`` also returns the QP result.
    """
    cfg = cfg or MpcConfig()
    prob = build_kinematic_problem(ref, state, model, cfg, prev, now)
    res = solve_qp(prob.H, prob.g, prob.A, prob.lo, prob.hi, prob.x0, max_iter=cfg.max_iter, tol=cfg.tol)
    v = float(np.clip(res.x[0], prob.lo[0], prob.hi[0]))
    d = float(np.clip(res.x[1], prob.lo[1], prob.hi[1]))
    cmd = ControlCommand(d, speed_cmd=v, mode="kinematic", qp_iterations=res.iterations,
                         qp_converged=res.converged)
    return (cmd, res, prob) if details else cmd


def lateral_error_model(model: DynamicModel, v: float):
    """Continuous ``(A, B_steer, B_yawrate_ref)`` for the lateral/heading error states."""
    m, iz, cf, cr, lf, lr = model.mass, model.iz, model.cf, model.cr, model.lf, model.lr
    A = np.array([
        [0.0, 1.0, 0.0, 0.0],
        [0.0, -(cf + cr) / (m * v), (cf + cr) / m, (-cf * lf + cr * lr) / (m * v)],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, (-cf * lf + cr * lr) / (iz * v), (cf * lf - cr * lr) / iz, -(cf * lf ** 2 + cr * lr ** 2) / (iz * v)],
    ])
    B = np.array([0.0, cf / m, 0.0, cf * lf / iz])
    E = np.array([0.0, (-cf * lf + cr * lr) / (m * v) - v, 0.0, -(cf * lf ** 2 + cr * lr ** 2) / (iz * v)])
    return A, B, E


def discretize(A, B, E, dt):
    n = A.shape[0]
    aug = np.zeros((n + 2, n + 2))
    aug[:n, :n] = A
    aug[:n, n] = B
    aug[:n, n + 1] = E
    ex = expm(aug * dt)
    return ex[:n, :n], ex[:n, n], ex[:n, n + 1]


def steady_state(model: DynamicModel, v: float, kappa):
    """Equilibrium ``(z_ss, steer_ss)`` holding a constant curvature with zero lateral error.

    The heading error settles at minus the body sideslip, so tracking must
    aim at it rather than at zero.
    """
    A, B, E = lateral_error_model(model, v)
    kappa = np.atleast_1d(np.asarray(kappa, dtype=float))
    M = np.array([[A[1, 2], B[1]], [A[3, 2], B[3]]])
    rhs = -np.outer([E[1], E[3]], v * kappa)
    e2, steer = np.linalg.solve(M, rhs)
    z = np.zeros((len(kappa), 4))
    z[:, 2] = e2
    return z, steer


def lateral_errors(arr: TrajArrays, state: VehicleState, model: DynamicModel):
    """Error state of the center of gravity, which sits ``lr`` ahead of the rear axle."""
    p = state.pose
    cx, cy = p.x + model.lr * math.cos(p.heading), p.y + model.lr * math.sin(p.heading)
    s = arr.project(cx, cy)
    x, y, th, _, k = (float(a[0]) for a in arr.at_s(np.array([s])))
    ey = -(cx - x) * math.sin(th) + (cy - y) * math.cos(th)
    epsi = normalize_angle(p.heading - th)
    v = state.speed
    tan_d = math.tan(state.steer_angle)
    vy = v * tan_d * model.lr / model.wheelbase     # kinematic lateral velocity of the CG
    return s, np.array([ey, vy + v * math.sin(epsi), epsi, v * tan_d / model.wheelbase - v * k])


def mpc_dynamic_lateral(ref: Trajectory, state: VehicleState, model: DynamicModel, cfg: MpcConfig | None = None,
                        steer_limit: float = 0.55, steer_rate_limit: float = 0.8, prev_steer: float | None = None,
                        details: bool = False):
    """First steering input of the dynamic lateral-error MPC.

    States and steering are penalized relative to the constant-curvature
    equilibrium at each predicted step.
    """
    cfg = cfg or MpcConfig()
    v = state.speed
    if v <= cfg.v_eps:
        raise LowSpeed(f"speed {v:.3f} m/s below {cfg.v_eps} m/s")
    N, dt = cfg.horizon, cfg.dt
    arr = ref if isinstance(ref, TrajArrays) else TrajArrays(ref)
    s0, z0 = lateral_errors(arr, state, model)
    kr = arr.at_s(s0 + v * dt * np.arange(N))[4]
    Ac, Bc, Ec = lateral_error_model(model, v)
    Ad, Bd, Ed = discretize(Ac, Bc, Ec, dt)
    z_ss, d_ss = steady_state(model, v, kr)

    nz = 4
    M = np.zeros((nz, N))
    z = z0.copy()
    Gam, free = [], []
    for k in range(N):
        M = Ad @ M
        M[:, k] += Bd
        z = Ad @ z + Ed * (v * kr[k])
        Gam.append(M.copy())
        free.append(z.copy())
    Gam = np.vstack(Gam)
    free = np.concatenate(free) - z_ss.ravel()
    Qb = np.diag(np.tile(cfg.q_dyn, N))
    D = _diff_matrix(1, N)
    prev = state.steer_angle if prev_steer is None else prev_steer
    b = np.zeros(N)
    b[0] = prev
    H = 2.0 * (Gam.T @ Qb @ Gam + cfg.r_dyn * np.eye(N) + cfg.r_rate_dyn * D.T @ D)
    g = 2.0 * (Gam.T @ Qb @ free - cfg.r_dyn * d_ss - cfg.r_rate_dyn * D.T @ b)
    A, lo, hi, x0 = _rate_constraints(1, N, np.array([prev]), (-steer_limit,), (steer_limit,),
                                      (-steer_rate_limit * dt,), (steer_rate_limit * dt,))
    res: QpResult = solve_qp(H, g, A, lo, hi, x0, max_iter=cfg.max_iter, tol=cfg.tol)
    steer = float(np.clip(res.x[0], lo[0], hi[0]))
    return (steer, res) if details else steer
