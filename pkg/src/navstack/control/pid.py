from __future__ import annotations

from dataclasses import dataclass

from ..errors import InvalidArgument


@dataclass(frozen=True)
class PidGains:
    kp: float = 0.8
    ki: float = 0.2
    kd: float = 0.0
    integral_clamp: float = 2.0
    output_clamp: float = 2.0

    def __post_init__(self):
        if self.integral_clamp <= 0 or self.output_clamp <= 0:
            raise InvalidArgument("PID clamps must be positive")


class LongitudinalPID:
    """Speed PID with derivative on measurement and a frozen integrator while saturated."""

    def __init__(self, gains: PidGains | None = None):
        self.gains = gains or PidGains()
        self.integral = 0.0
        self.prev_measurement: float | None = None

    def reset(self):
        self.integral = 0.0
        self.prev_measurement = None

    def __call__(self, v_ref: float, v: float, dt: float) -> float:
        if dt <= 0:
            raise InvalidArgument("dt must be positive")
        g = self.gains
        err = v_ref - v
        deriv = 0.0 if self.prev_measurement is None else -(v - self.prev_measurement) / dt
        self.prev_measurement = v
        trial = min(max(self.integral + g.ki * err * dt, -g.integral_clamp), g.integral_clamp)
        raw = g.kp * err + trial + g.kd * deriv
        if abs(raw) <= g.output_clamp:
            self.integral = trial
            return raw
        out = g.kp * err + self.integral + g.kd * deriv
        return min(max(out, -g.output_clamp), g.output_clamp)


def pid_longitudinal(v_ref: float, v: float, gains: PidGains, dt: float,
                     state: LongitudinalPID | None = None) -> float:
    """One PID step; pass ``state`` to carry integral/derivative memory across calls."""
    ctl = state if state is not None else LongitudinalPID(gains)
    return ctl(v_ref, v, dt)
