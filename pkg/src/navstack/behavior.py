"""Maneuver selection from road context, traffic signals and the lead agent.

The rule table is total and deterministic; every switch between maneuvers
(other than into an emergency stop or a red-light stop) is held for
``hold`` seconds to stop flip-flopping around thresholds.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Sequence

from .core import VehicleState
from .errors import InvalidArgument, OutOfBounds
from .routenet import ReferencePath, RoadClass


class ManeuverKind(str, enum.Enum):
    LANE_KEEP = "LaneKeep"
    FOLLOW_LEAD = "FollowLead"
    OVERTAKE = "Overtake"
    PULL_OVER = "PullOver"
    EMERGENCY_STOP = "EmergencyStop"


class Signal(str, enum.Enum):
    NONE = "None"
    RED = "Red"
    GREEN = "Green"


@dataclass(frozen=True)
class Maneuver:
    kind: ManeuverKind = ManeuverKind.LANE_KEEP
    offset: float | None = None
    stop_s: float | None = None  # station to stop at (PullOver)
    since: float = -math.inf     # clock time the maneuver was entered

    def __post_init__(self):
        if self.kind is ManeuverKind.OVERTAKE and not self.offset:
            raise InvalidArgument("Overtake needs a non-zero corridor offset")
        if self.kind is ManeuverKind.EMERGENCY_STOP and self.offset is not None:
            raise InvalidArgument("EmergencyStop carries no offset")


@dataclass(frozen=True)
class RoadContext:
    road_class: RoadClass = RoadClass.URBAN_MAIN
    traffic_signal: Signal = Signal.NONE
    lane_change_allowed: bool = True
    speed_limit: float = 5.0
    lane_width: float = 3.5
    signal_s: float | None = None

    def __post_init__(self):
        if self.speed_limit <= 0:
            raise InvalidArgument("speed_limit must be positive")


@dataclass(frozen=True)
class LeadInfo:
    present: bool = False
    gap: float = math.inf
    speed: float = 0.0

    def __post_init__(self):
        if self.present and self.gap < 0:
            raise InvalidArgument("lead gap must be non-negative")


@dataclass(frozen=True)
class TrafficLight:
    """A stop line at station ``s`` that is red during any of ``red`` windows."""

    s: float
    red: tuple[tuple[float, float], ...] = ()

    def state_at(self, t: float) -> Signal:
        return Signal.RED if any(a <= t < b for a, b in self.red) else Signal.GREEN


@dataclass(frozen=True)
class BehaviorParams:
    follow_headway: float = 3.0
    speed_margin: float = 1.0
    hold: float = 2.0
    pullover_distance: float = 10.0
    signal_lookahead: float = 50.0
    standstill_gap: float = 2.0
    allow_rule_relaxation: bool = False


def classify_context(path: ReferencePath, s: float, t: float = 0.0, lights: Sequence[TrafficLight] = (),
                     lane_change_allowed: bool = True, lookahead: float = 50.0) -> RoadContext:
    """Context of the route segment containing ``s`` plus the nearest signal ahead.

    A light counts when its stop line lies in ``[s, s + lookahead]``.
    """
    if s < 0 or s > path.length + 1e-9:
        raise OutOfBounds(f"s={s} outside the route [0, {path.length}]")
    seg = path.segment_at(s)
    signal, sig_s = Signal.NONE, None
    ahead = sorted((lt for lt in lights if s <= lt.s <= s + lookahead), key=lambda lt: lt.s)
    if ahead:
        signal, sig_s = ahead[0].state_at(t), ahead[0].s
    allowed = lane_change_allowed and seg.road_class is not RoadClass.UNSTRUCTURED
    return RoadContext(seg.road_class, signal, allowed, seg.speed_limit, seg.lane_width, sig_s)


def _candidate(ego: VehicleState, ctx: RoadContext, lead: LeadInfo, adjacent_free: bool,
               goal_distance: float, stop_distance: float, p: BehaviorParams) -> Maneuver:
    v_ref = ctx.speed_limit
    if lead.present and lead.gap <= stop_distance + p.standstill_gap and not adjacent_free:
        return Maneuver(ManeuverKind.EMERGENCY_STOP)
    if ctx.traffic_signal is Signal.RED:
        return Maneuver(ManeuverKind.PULL_OVER, 0.0, ctx.signal_s)
    if goal_distance <= p.pullover_distance:
        return Maneuver(ManeuverKind.PULL_OVER, 0.0, None)
    if not lead.present:
        return Maneuver(ManeuverKind.LANE_KEEP)
    slow = lead.speed < v_ref - p.speed_margin
    may_change = ctx.lane_change_allowed or (p.allow_rule_relaxation and lead.speed <= 0.1)
    if slow and adjacent_free and may_change:
        return Maneuver(ManeuverKind.OVERTAKE, ctx.lane_width)
    if slow:
        return Maneuver(ManeuverKind.FOLLOW_LEAD)
    headway = lead.gap / max(ego.speed, 1e-6)
    if headway < p.follow_headway:
        return Maneuver(ManeuverKind.FOLLOW_LEAD)
    return Maneuver(ManeuverKind.LANE_KEEP)


def decide_maneuver(ego: VehicleState, ctx: RoadContext, lead: LeadInfo, adjacent_corridor_free: bool,
                    prev: Maneuver, clock: float, *, goal_distance: float = math.inf,
                    stop_distance: float = 0.0, params: BehaviorParams | None = None) -> Maneuver:
    """Next maneuver; a pure function of its inputs.

    ``stop_distance`` is the ego braking distance; a lead inside it with no
    free adjacent corridor forces an emergency stop regardless of ``prev``.
    """
    p = params or BehaviorParams()
    cand = _candidate(ego, ctx, lead, adjacent_corridor_free, goal_distance, stop_distance, p)
    if cand.kind is prev.kind and cand.offset == prev.offset and cand.stop_s == prev.stop_s:
        return prev
    override = cand.kind is ManeuverKind.EMERGENCY_STOP or (
        cand.kind is ManeuverKind.PULL_OVER and ctx.traffic_signal is Signal.RED)
    if not override and clock - prev.since < p.hold:
        return prev
    if cand.kind is prev.kind:
        # same maneuver with refreshed parameters keeps its entry time
        return replace(cand, since=prev.since)
    return replace(cand, since=clock)
