"""Closed-loop simulation on a fixed clock: plan at plan_hz, control and integrate at control_hz."""
from __future__ import annotations

import hashlib
import io
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np
from shapely.geometry import Polygon

from ..behavior import (LeadInfo, Maneuver, ManeuverKind, Signal, TrafficLight, classify_context,
                        decide_maneuver)
from ..control import ControlCommand, StateEstimator, TrackingController, emergency_command
from ..core import Obstacle, Pose2D, Trajectory, TrajectoryPoint, VehicleState
from ..errors import InfeasibleProfile, InfeasibleQP, InvalidArgument, NoFeasiblePath, OffPath
from ..frenet import (CLEARANCE_SENTINEL, LatticeParams, ScoringContext, build_lattice, chain_samples,
                      check_collision, project_to_frenet, score_lattice, search_min_cost)
from ..motion import PlannedTrajectory, Source, emergency_stop, speed_caps, stop_distance, time_parameterize
from ..routenet import ReferencePath, plan_route, route_to_reference
from .metrics import Metrics, count_interventions
from .plant import DelayLine, PlantParams, latency_ticks, step_plant
from .scenario import Scenario, apply_overrides, from_dict

log = logging.getLogger(__name__)

MIN_PLAN_LENGTH = 0.5     # m; shorter remaining horizons produce a hold/stop trajectory
MIN_LAYER_LENGTH = 3.0    # m; short horizons use fewer layers so lateral moves stay gentle
REAR_CLEARANCE = 10.0     # m behind the ego that must be free for an adjacent corridor
STITCH_TOL = 0.5          # m/s; max gap between measured and previously planned speed to stitch
CSV_HEADER = ("tick", "t", "x", "y", "heading", "v", "a", "steer", "maneuver")


@dataclass(frozen=True)
class TickRecord:
    tick: int
    t: float
    state: VehicleState
    command: ControlCommand
    applied: ControlCommand
    maneuver: str
    traj_id: int
    cause: str | None
    cross_track: float
    clearance: float


@dataclass(frozen=True)
class PlanRecord:
    tick: int
    t: float
    maneuver: str
    source: str
    lattice_nodes: int
    lattice_edges: int
    chosen_cost: float
    wall_ms: float
    skipped: bool = False


@dataclass
class SimLog:
    scenario: str
    seed: int
    control_hz: int
    plan_hz: int
    delay_ticks: int
    reference: ReferencePath
    obstacles: tuple[Obstacle, ...] = ()
    ticks: list[TickRecord] = field(default_factory=list)
    plans: list[PlanRecord] = field(default_factory=list)
    end_reason: str = ""
    goal: tuple[float, float] = (0.0, 0.0)

    def csv_text(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(CSV_HEADER) + "\n")
        for r in self.ticks:
            s = r.state
            p = s.pose
            vals = (r.t, p.x, p.y, p.heading, s.speed, s.accel, s.steer_angle)
            buf.write(f"{r.tick}," + ",".join(repr(float(v)) for v in vals) + f",{r.maneuver}\n")
        return buf.getvalue()

    def digest(self) -> str:
        """Hash of every simulated quantity (wall-clock timings excluded)."""
        h = hashlib.sha256(self.csv_text().encode())
        for r in self.ticks:
            c = r.command
            h.update(repr((c.steer_angle, c.speed_cmd, c.accel_cmd, c.mode, r.traj_id, r.cause)).encode())
        for p in self.plans:
            h.update(repr((p.tick, p.maneuver, p.source, p.lattice_nodes, p.lattice_edges, p.chosen_cost,
                           p.skipped)).encode())
        return h.hexdigest()


@dataclass(frozen=True)
class Perception:
    lead: LeadInfo
    lead_s: float | None       # station of the lead's rear edge
    adjacent_free: bool


@dataclass(frozen=True)
class PlanOutcome:
    trajectory: PlannedTrajectory
    maneuver: Maneuver
    cause: str | None = None
    lattice_nodes: int = 0
    lattice_edges: int = 0
    chosen_cost: float = 0.0


def _extent(ob: Obstacle, t: float, o, heading: float) -> tuple[float, float, float, float]:
    """Footprint span ``(s_lo, s_hi, d_lo, d_hi)`` in the local road frame at the obstacle's station."""
    pose = ob.pose_at(t)
    rel = ob.polygon_at(t) - (pose.x, pose.y)
    c, sn = math.cos(heading), math.sin(heading)
    ds = rel[:, 0] * c + rel[:, 1] * sn
    dd = -rel[:, 0] * sn + rel[:, 1] * c
    return o.s + ds.min(), o.s + ds.max(), o.d + dd.min(), o.d + dd.max()


class Planner:
    """Snapshot in, trajectory out; holds only the reference path and configuration."""

    def __init__(self, sc: Scenario, ref: ReferencePath, lights: tuple[TrafficLight, ...]):
        self.sc = sc
        self.ref = ref
        self.lights = lights
        v = sc.vehicle
        self.front = v.footprint.length - v.footprint.rear_axle_to_tail
        self.kappa_max = math.tan(v.kinematic.steer_limit) / v.kinematic.wheelbase
        lane = max(seg.lane_width for seg in ref.segments)
        self.half_width = sc.planner.corridor_half_width or 1.5 * lane
        lim = v.limits
        self.comfort = replace(lim, a_min=max(lim.a_min, sc.planner.comfort_decel))

    def perceive(self, fs, obstacles, t: float, lane_width: float) -> Perception:
        p = self.sc.planner
        half_w = self.sc.vehicle.footprint.width / 2
        ego_front = fs.s + self.front
        lead, lead_s, lead_hi = None, None, None
        tracks = []
        for ob in obstacles:
            pose = ob.pose_at(t)
            try:
                o = project_to_frenet(self.ref, pose, max_distance=self.half_width + 10.0)
            except OffPath:
                continue
            th = float(np.interp(o.s, self.ref.s, self.ref.heading_unwrapped))
            s_lo, s_hi, d_lo, d_hi = _extent(ob, t, o, th)
            tracks.append((s_lo, s_hi, d_lo, d_hi))
            # occupancy of the ego lane (centered on the reference), not of the ego's current offset
            in_lane = d_lo < half_w + p.safety_margin and d_hi > -half_w - p.safety_margin
            if in_lane and s_lo > fs.s and s_lo - ego_front < p.lookahead:
                if lead_s is None or s_lo < lead_s:
                    lead_s, lead_hi = s_lo, s_hi
                    vx, vy = ob.velocity_at(t)
                    lead = LeadInfo(True, max(s_lo - ego_front, 0.0), max(vx * math.cos(th) + vy * math.sin(th), 0.0))
        free = True
        if lead is not None:
            # the adjacent corridor must be clear from behind the ego to past the lead, lead included
            lo, hi = fs.s - REAR_CLEARANCE, lead_hi + p.lookahead / 2
            for s_lo, s_hi, d_lo, d_hi in tracks:
                if s_hi >= lo and s_lo <= hi and d_hi > lane_width / 2 and d_lo < 1.5 * lane_width:
                    free = False
                    break
            if self.half_width <= lane_width / 2 + half_w:
                free = False
        return Perception(lead or LeadInfo(), lead_s, free)

    def plan(self, t: float, tick: int, xhat: VehicleState, obstacles, prev: Maneuver,
             prev_traj: PlannedTrajectory | None = None) -> PlanOutcome:
        sc, ref = self.sc, self.ref
        limits = sc.vehicle.limits
        v0 = xhat.speed
        if prev_traj is not None and prev_traj.source is Source.NOMINAL:
            # stitch: continue the previous speed profile when the vehicle is close to it
            prev_t = prev_traj.trajectory
            v_prev = prev_t.sample(t - prev_t.start_time).speed
            if abs(v_prev - v0) <= STITCH_TOL:
                v0 = v_prev
        try:
            fs = project_to_frenet(ref, xhat.pose, xhat.speed, max_distance=self.half_width)
        except OffPath:
            return PlanOutcome(emergency_stop(xhat, limits, tick=tick), Maneuver(ManeuverKind.EMERGENCY_STOP, since=t),
                               "no_feasible")
        s_here = min(max(fs.s, 0.0), ref.length)
        ctx = classify_context(ref, s_here, t, self.lights, lookahead=sc.planner.behavior.signal_lookahead)
        per = self.perceive(fs, obstacles, t, ctx.lane_width)
        man = decide_maneuver(xhat, ctx, per.lead, per.adjacent_free, prev, t,
                              goal_distance=ref.length - fs.s, stop_distance=stop_distance(xhat.speed, limits),
                              params=sc.planner.behavior)
        if man.kind is ManeuverKind.EMERGENCY_STOP:
            return PlanOutcome(emergency_stop(xhat, limits, tick=tick), man, "no_feasible")

        v_ref = min(ctx.speed_limit, limits.v_max)
        s_stop, v_stop = ref.length, 0.0
        if man.kind is ManeuverKind.PULL_OVER and man.stop_s is not None and ctx.traffic_signal is Signal.RED:
            s_stop = min(s_stop, man.stop_s - self.front)
        if per.lead.present and man.kind in (ManeuverKind.FOLLOW_LEAD, ManeuverKind.LANE_KEEP,
                                             ManeuverKind.PULL_OVER):
            s_follow = per.lead_s - sc.planner.behavior.standstill_gap - self.front
            if s_follow < s_stop:
                s_stop, v_stop = s_follow, per.lead.speed
                v_ref = min(v_ref, max(per.lead.speed, 0.5 * v_ref)) if per.lead.speed > 0.1 else v_ref
        end = min(fs.s + sc.planner.lattice.horizon_s, s_stop, ref.length)
        v_end = v_stop if end >= s_stop - 1e-9 else v_ref
        if end - fs.s < MIN_PLAN_LENGTH:
            return PlanOutcome(self._stop_here(xhat, tick), man)

        lp = sc.planner.lattice
        n_layers = max(1, min(lp.n_layers, int((end - fs.s) / MIN_LAYER_LENGTH)))
        params = LatticeParams(end - fs.s, n_layers, lp.offsets, lp.speed_fractions)
        lattice = build_lattice(fs, params, v_ref=v_ref, path_length=ref.length,
                                corridor_half_width=self.half_width)
        target = man.offset if man.kind is ManeuverKind.OVERTAKE else 0.0
        sctx = ScoringContext(ref, tuple(obstacles), sc.vehicle.footprint, sc.vehicle.n_circles,
                              sc.planner.safety_margin, sc.planner.influence, v_ref, target,
                              self.kappa_max, t, sc.planner.weights)
        scored = score_lattice(lattice, sctx)
        try:
            chain = search_min_cost(lattice, scored.costs, scored)
        except NoFeasiblePath:
            return PlanOutcome(emergency_stop(xhat, limits, tick=tick),
                               Maneuver(ManeuverKind.EMERGENCY_STOP, since=t), "no_feasible",
                               lattice.n_nodes, lattice.n_edges, math.inf)
        col = check_collision(chain.curves, sctx)
        if not col.feasible:
            return PlanOutcome(emergency_stop(xhat, limits, tick=tick),
                               Maneuver(ManeuverKind.EMERGENCY_STOP, since=t), "clearance",
                               lattice.n_nodes, lattice.n_edges, chain.total_cost)
        s, x, y, hd, k, vt = chain_samples(ref, chain.curves)
        seg = np.hypot(np.diff(x), np.diff(y))
        sc_arc = np.concatenate([[0.0], np.cumsum(seg)])
        cap = np.minimum(vt, ref.speed_limit_at(s))
        traj = None
        # comfortable braking first; if that is too late, the just-sufficient
        # constant deceleration (so braking starts now), and the full limit last
        v_fin = min(v_end, float(cap[-1]))
        # the tightest constant deceleration demanded by any downstream cap or the end speed
        reach = np.append(speed_caps(k, limits, cap)[1:], v_fin)
        dist = np.append(sc_arc[1:], sc_arc[-1])
        a_req = float(np.min((reach * reach - v0 * v0) / (2.0 * np.maximum(dist, 1e-6))))
        needed = replace(limits, a_min=min(max(limits.a_min, 1.05 * a_req), -1e-3))
        for lim in (self.comfort, needed, limits):
            try:
                traj = time_parameterize(x, y, k, sc_arc, lim, v0, v_fin,
                                         speed_limit=cap, headings=hd, tick=tick, start_time=t)
                break
            except InfeasibleProfile as exc:
                log.debug("t=%.2f: %s", t, exc)
        if traj is None:
            return PlanOutcome(emergency_stop(xhat, limits, tick=tick),
                               Maneuver(ManeuverKind.EMERGENCY_STOP, since=t), "no_feasible",
                               lattice.n_nodes, lattice.n_edges, chain.total_cost)
        return PlanOutcome(traj, man, None, lattice.n_nodes, lattice.n_edges, chain.total_cost)

    def _stop_here(self, xhat: VehicleState, tick: int) -> PlannedTrajectory:
        if xhat.speed > 0.05:
            em = emergency_stop(xhat, self.sc.vehicle.limits, tick=tick)
            return replace(em, source=Source.NOMINAL)
        pt = TrajectoryPoint(xhat.pose, 0.0)
        return PlannedTrajectory(Trajectory((pt,), start_time=xhat.timestamp), tick)


def _ego_polygon(sc: Scenario, pose: Pose2D) -> Polygon:
    return Polygon(sc.vehicle.footprint.corners(pose))


class Simulation:
    def __init__(self, sc: Scenario, seed: int | None = None):
        self.sc = sc
        self.seed = sc.seed if seed is None else seed
        route = plan_route(sc.graph, sc.start, sc.goal)
        self.ref = route_to_reference(sc.graph, route, sc.planner.path_spacing)
        self.goal = sc.graph.position(sc.goal)
        lights = []
        for lt in sc.lights:
            s = lt.s
            if s is None:
                s = project_to_frenet(self.ref, Pose2D(*lt.xy), max_distance=math.inf).s
            lights.append(TrafficLight(float(s), lt.red))
        self.planner = Planner(sc, self.ref, tuple(lights))

    def initial_state(self) -> VehicleState:
        e = self.sc.ego
        x0, y0, th0, _ = self.ref.at(0.0)
        return VehicleState(Pose2D(e.get("x", float(x0)), e.get("y", float(y0)), e.get("heading", float(th0))),
                            e.get("speed", 0.0))

    def _snapshot(self, t: float, rng) -> tuple[Obstacle, ...]:
        sigma = self.sc.sim.obstacle_noise
        if not sigma:
            return self.sc.obstacles
        out = []
        for ob in self.sc.obstacles:
            dx, dy = rng.normal(0.0, sigma, 2)
            sched = tuple((tt, Pose2D(p.x + dx, p.y + dy, p.heading)) for tt, p in ob.predicted_trajectory)
            out.append(Obstacle(ob.id, ob.footprint, sched))
        return tuple(out)

    def _clearance(self, pose: Pose2D, t: float) -> float:
        if not self.sc.obstacles:
            return CLEARANCE_SENTINEL
        ego = _ego_polygon(self.sc, pose)
        reach = self.sc.vehicle.footprint.length + 20.0
        best = CLEARANCE_SENTINEL
        for ob in self.sc.obstacles:
            poly = ob.polygon_at(t)
            c = poly.mean(axis=0)
            if math.hypot(c[0] - pose.x, c[1] - pose.y) > reach:
                continue
            best = min(best, float(ego.distance(Polygon(poly))))
        return best

    def run(self) -> tuple[SimLog, Metrics]:
        sc = self.sc
        hz = sc.control_hz
        per_plan = hz // sc.plan_hz
        dt = 1.0 / hz
        rng = np.random.default_rng(self.seed)
        kin = sc.vehicle.kinematic
        plant = PlantParams(kin.wheelbase, kin.steer_limit, sc.sim.steer_tau, sc.sim.speed_tau)
        ctl = TrackingController(kin, sc.vehicle.dynamic, sc.control.mpc, sc.control.pid, sc.control.switch_speed,
                                 speed_lead=sc.sim.speed_tau)
        state = self.initial_state()
        delay = DelayLine(latency_ticks(sc.latency, hz), ControlCommand(state.steer_angle, state.speed))
        est = StateEstimator()
        log_ = SimLog(sc.name, self.seed, hz, sc.plan_hz, delay.ticks, self.ref, sc.obstacles, goal=self.goal)

        traj = self.planner._stop_here(state, 0)
        traj_id = 0
        maneuver, cause = Maneuver(), None
        max_ticks = int(math.ceil(sc.sim.timeout * hz))
        reason = "timeout"
        for k in range(max_ticks + 1):
            t = k / hz
            state = replace(state, timestamp=t)
            est.update(state)
            xhat = est.estimate(t)
            dropout = any(a <= t < b for a, b in sc.dropouts)
            if dropout and not (maneuver.kind is ManeuverKind.EMERGENCY_STOP and cause == "dropout"):
                maneuver, cause = Maneuver(ManeuverKind.EMERGENCY_STOP, since=t), "dropout"
                traj = emergency_stop(xhat, sc.vehicle.limits, tick=k)
                traj_id += 1
            if k % per_plan == 0:
                if dropout:
                    log_.plans.append(PlanRecord(k, t, maneuver.kind.value, traj.source.value, 0, 0, 0.0, 0.0, True))
                else:
                    w0 = time.perf_counter()
                    out = self.planner.plan(t, k, xhat, self._snapshot(t, rng), maneuver, traj)
                    wall = (time.perf_counter() - w0) * 1e3
                    traj, maneuver, cause = out.trajectory, out.maneuver, out.cause
                    traj_id += 1
                    log_.plans.append(PlanRecord(k, t, maneuver.kind.value, traj.source.value, out.lattice_nodes,
                                                 out.lattice_edges, out.chosen_cost, wall))
            if traj.source is Source.EMERGENCY:
                cmd = emergency_command(xhat, sc.vehicle.limits.a_min)
            else:
                try:
                    cmd = ctl(traj.trajectory, xhat, dt)
                except InfeasibleQP as exc:
                    log.debug("t=%.2f: %s", t, exc)
                    cmd = emergency_command(xhat, sc.vehicle.limits.a_min)
            try:
                ct = abs(project_to_frenet(self.ref, state.pose, max_distance=math.inf).d)
            except (OffPath, InvalidArgument):
                ct = math.inf
            clear = self._clearance(state.pose, t)
            applied = delay.push(cmd)
            log_.ticks.append(TickRecord(k, t, state, cmd, applied, maneuver.kind.value, traj_id, cause, ct, clear))
            if clear <= 0.0:
                reason = "collision"
                break
            if math.hypot(state.pose.x - self.goal[0], state.pose.y - self.goal[1]) < sc.sim.goal_radius:
                reason = "goal"
                break
            if k == max_ticks:
                break
            state = step_plant(state, applied, dt, None, plant)
        log_.end_reason = reason
        return log_, compute_metrics(log_, sc.sim.goal_radius)


def compute_metrics(log_: SimLog, goal_radius: float = 1.0) -> Metrics:
    if not log_.ticks:
        return Metrics()
    ct = np.array([r.cross_track for r in log_.ticks])
    ct = ct[np.isfinite(ct)]
    xs = np.array([r.state.pose.x for r in log_.ticks])
    ys = np.array([r.state.pose.y for r in log_.ticks])
    dist = float(np.sum(np.hypot(np.diff(xs), np.diff(ys))))
    dur = log_.ticks[-1].t - log_.ticks[0].t
    last = log_.ticks[-1].state.pose
    done = log_.end_reason == "goal" and math.hypot(last.x - log_.goal[0], last.y - log_.goal[1]) < goal_radius
    walls = [p.wall_ms for p in log_.plans if not p.skipped]
    return Metrics(
        completed=bool(done),
        cross_track_rms=float(np.sqrt(np.mean(ct * ct))) if ct.size else 0.0,
        cross_track_max=float(ct.max()) if ct.size else 0.0,
        min_clearance=max(0.0, min(r.clearance for r in log_.ticks)),
        interventions=count_interventions(log_.ticks),
        avg_speed=dist / dur if dur > 0 else 0.0,
        distance=dist,
        plan_cycle_p95=float(np.percentile(walls, 95)) if walls else 0.0,
    )


def run_scenario(scenario, overrides=None, seed: int | None = None) -> tuple[SimLog, Metrics]:
    """Run a scenario given as a :class:`Scenario`, a document dict or a JSON path."""
    if isinstance(scenario, Scenario):
        if overrides:
            scenario = from_dict(apply_overrides(scenario.raw, overrides))
    elif isinstance(scenario, Mapping):
        scenario = from_dict(apply_overrides(scenario, overrides))
    else:
        from .scenario import load
        scenario = load(scenario, overrides)
    return Simulation(scenario, seed).run()
