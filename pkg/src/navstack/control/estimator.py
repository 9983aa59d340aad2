from __future__ import annotations

import math
from dataclasses import replace
from typing import Iterable

from ..core import Pose2D, VehicleState
from ..errors import NoState

SPEED_TAU = 0.05


class StateEstimator:
    """Low-pass filtered speed plus constant-velocity extrapolation of the latest sample."""

    def __init__(self, tau: float = SPEED_TAU):
        self.tau = tau
        self.latest: VehicleState | None = None
        self.speed = 0.0

    def update(self, sample: VehicleState) -> None:
        if self.latest is None:
            self.speed = sample.speed
        else:
            dt = sample.timestamp - self.latest.timestamp
            if dt > 0:
                alpha = 1.0 - math.exp(-dt / self.tau)
                self.speed += alpha * (sample.speed - self.speed)
        self.latest = sample

    def estimate(self, now: float) -> VehicleState:
        if self.latest is None:
            raise NoState("no feedback received yet")
        s = self.latest
        dt = now - s.timestamp
        p = s.pose
        if dt > 0:
            p = Pose2D(p.x + self.speed * dt * math.cos(p.heading),
                       p.y + self.speed * dt * math.sin(p.heading), p.heading)
        return replace(s, pose=p, speed=self.speed, timestamp=now)


def estimate_state(samples: Iterable[VehicleState], now: float, tau: float = SPEED_TAU) -> VehicleState:
    est = StateEstimator(tau)
    for smp in samples:
        est.update(smp)
    return est.estimate(now)
