"""Trajectory tracking: state estimation, MPC variants, longitudinal PID."""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from ..core import Trajectory, VehicleState
from ..errors import LowSpeed
from .estimator import StateEstimator, estimate_state
from .mpc import (ControlCommand, DynamicModel, KinematicModel, MpcConfig, TrajArrays, mpc_dynamic_lateral,
                  mpc_kinematic)
from .pid import LongitudinalPID, PidGains, pid_longitudinal
from .qp import QpResult, solve_qp

__all__ = [
    "ControlCommand", "DynamicModel", "KinematicModel", "MpcConfig", "LongitudinalPID", "PidGains",
    "QpResult", "StateEstimator", "TrackingController", "estimate_state", "mpc_dynamic_lateral",
    "mpc_kinematic", "pid_longitudinal", "solve_qp", "emergency_command",
]


class TrackingController:
    """Picks kinematic MPC at low speed and dynamic lateral MPC + PID above ``switch_speed``.

    The switch has a small hysteresis band so speed noise around the
    threshold does not toggle modes every tick. ``speed_lead`` (s) advances
    the kinematic speed command along the planned acceleration to offset a
    lagging speed actuator.
    """

    def __init__(self, kinematic: KinematicModel, dynamic: DynamicModel, cfg: MpcConfig | None = None,
                 pid: PidGains | None = None, switch_speed: float = 3.0, band: float = 0.2,
                 speed_lead: float = 0.0):
        self.kin = kinematic
        self.dyn = dynamic
        self.cfg = cfg or MpcConfig()
        self.pid = LongitudinalPID(pid)
        self.switch_speed = switch_speed
        self.band = band
        self.speed_lead = speed_lead
        self.mode = "kinematic"
        self.prev: ControlCommand | None = None
        self._raw_speed: float | None = None   # MPC speed before lag lead, for its rate limit
        self._arrays: tuple[int, TrajArrays] | None = None

    def _traj_arrays(self, traj: Trajectory) -> TrajArrays:
        if self._arrays is None or self._arrays[0] != id(traj):
            self._arrays = (id(traj), TrajArrays(traj))
        return self._arrays[1]

    def __call__(self, traj: Trajectory, state: VehicleState, dt: float) -> ControlCommand:
        v = state.speed
        if self.mode == "kinematic" and v >= self.switch_speed:
            self.mode = "dynamic"
            self.pid.reset()
        elif self.mode == "dynamic" and v < self.switch_speed - self.band:
            self.mode = "kinematic"
        arr = self._traj_arrays(traj)
        prev_steer = state.steer_angle if self.prev is None else self.prev.steer_angle
        if self.mode == "dynamic":
            try:
                steer, res = mpc_dynamic_lateral(arr, state, self.dyn, self.cfg, self.kin.steer_limit,
                                                 self.kin.steer_rate_limit, prev_steer, details=True)
                now = state.timestamp
                v_ref = float(arr.at_time([now])[3][0])
                a_ff = float(np.interp(now, arr.t, arr.a)) if len(arr.t) > 1 else 0.0
                acc = min(max(a_ff + self.pid(v_ref, v, dt), self.cfg.a_min), self.cfg.a_max)
                cmd = ControlCommand(steer, accel_cmd=acc, mode="dynamic", qp_iterations=res.iterations,
                                     qp_converged=res.converged)
                self.prev = cmd
                self._raw_speed = None
                return cmd
            except LowSpeed:
                self.mode = "kinematic"
        prev_speed = v if self._raw_speed is None else self._raw_speed
        cmd = mpc_kinematic(arr, state, self.kin, self.cfg, prev=(prev_speed, prev_steer))
        self._raw_speed = cmd.speed_cmd
        if self.speed_lead > 0 and len(arr.t) > 1:
            # lead the speed command by the actuator lag using the planned acceleration
            a_ff = float(np.interp(state.timestamp, arr.t, arr.a))
            lead = min(max(cmd.speed_cmd + self.speed_lead * a_ff, self.cfg.v_min), self.cfg.v_max)
            cmd = replace(cmd, speed_cmd=lead)
        self.prev = cmd
        return cmd

    def reset(self):
        self.prev = None
        self._raw_speed = None
        self.pid.reset()
        self.mode = "kinematic"


def emergency_command(state: VehicleState, a_min: float) -> ControlCommand:
    """Full braking with the steering held."""
    return ControlCommand(state.steer_angle, speed_cmd=0.0, accel_cmd=a_min if state.speed > 0 else 0.0,
                          mode="emergency")
