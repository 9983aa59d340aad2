"""Simulated chassis: kinematic bicycle with actuator lags and a command delay line."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

from ..control import ControlCommand
from ..core import Pose2D, VehicleState
from ..errors import InvalidArgument


@dataclass(frozen=True)
class PlantParams:
    wheelbase: float = 1.9
    steer_limit: float = 0.55
    steer_tau: float = 0.1
    speed_tau: float = 0.2


def latency_ticks(latency: float, control_hz: float) -> int:
    """Delay in whole control ticks, rounded half up."""
    return int(math.floor(latency * control_hz + 0.5 + 1e-9))


class DelayLine:
    """Fixed-length FIFO: a command pushed at tick k comes out at tick k + ticks."""

    def __init__(self, ticks: int, initial: ControlCommand):
        if ticks < 0:
            raise InvalidArgument("delay must be non-negative")
        self.ticks = ticks
        self._q = deque([initial] * ticks)

    def push(self, cmd: ControlCommand) -> ControlCommand:
        if self.ticks == 0:
            return cmd
        self._q.append(cmd)
        return self._q.popleft()


def _deriv(s, steer_cmd, speed_cmd, accel, p: PlantParams):
    x, y, th, v, d = s
    dv = accel if speed_cmd is None else (speed_cmd - v) / p.speed_tau
    return (v * math.cos(th), v * math.sin(th), v * math.tan(d) / p.wheelbase, dv, (steer_cmd - d) / p.steer_tau)


def _rk4(s, dt, steer_cmd, speed_cmd, accel, p):
    def add(a, k, h):
        return tuple(ai + h * ki for ai, ki in zip(a, k))

    k1 = _deriv(s, steer_cmd, speed_cmd, accel, p)
    k2 = _deriv(add(s, k1, dt / 2), steer_cmd, speed_cmd, accel, p)
    k3 = _deriv(add(s, k2, dt / 2), steer_cmd, speed_cmd, accel, p)
    k4 = _deriv(add(s, k3, dt), steer_cmd, speed_cmd, accel, p)
    return tuple(si + dt / 6.0 * (a + 2 * b + 2 * c + e) for si, a, b, c, e in zip(s, k1, k2, k3, k4))


def step_plant(state: VehicleState, cmd: ControlCommand, dt: float, buffer: DelayLine | None = None,
               params: PlantParams | None = None) -> VehicleState:
    """Advance the plant by ``dt`` under the command leaving the delay line.

    A command with ``speed_cmd`` set is tracked through a first-order lag;
    otherwise ``accel_cmd`` is integrated directly. Speed never goes negative.
    """
    if dt <= 0:
        raise InvalidArgument("dt must be positive")
    p = params or PlantParams()
    applied = buffer.push(cmd) if buffer is not None else cmd
    steer_cmd = max(-p.steer_limit, min(p.steer_limit, applied.steer_angle))
    speed_cmd = None if applied.speed_cmd is None or applied.accel_cmd is not None else max(applied.speed_cmd, 0.0)
    accel = applied.accel_cmd or 0.0
    pose = state.pose
    s = (pose.x, pose.y, pose.heading, state.speed, state.steer_angle)
    if speed_cmd is None and accel < 0 and state.speed + accel * dt < 0:
        # brake to a standstill part way through the step, then coast at rest
        t_stop = -state.speed / accel
        s = _rk4(s, t_stop, steer_cmd, None, accel, p) if t_stop > 0 else s
        s = (s[0], s[1], s[2], 0.0, s[4])
        s = _rk4(s, dt - t_stop, steer_cmd, None, 0.0, p)
    else:
        s = _rk4(s, dt, steer_cmd, speed_cmd, accel, p)
    v = max(s[3], 0.0)
    return VehicleState(Pose2D(s[0], s[1], s[2]), v, (v - state.speed) / dt, s[4], state.timestamp + dt)
