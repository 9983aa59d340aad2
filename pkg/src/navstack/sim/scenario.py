"""Scenario documents: JSON schema, validation, overrides and typed loading."""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

import jsonschema

from ..behavior import BehaviorParams
from ..control import DynamicModel, KinematicModel, MpcConfig, PidGains
from ..core import Footprint, Obstacle, Pose2D, is_convex_ccw
from ..errors import ScenarioError
from ..frenet import CostWeights, LatticeParams
from ..motion import DynamicLimits
from ..routenet import RoadClass, RoadGraph, add_demonstration

SCHEMA_VERSION = 1

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_point = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
_road_class = {"enum": [c.value for c in RoadClass]}
# a node id, or a position snapped to the nearest node (demonstration nodes get generated ids)
_endpoint = {"oneOf": [{"type": "integer"}, {"type": "object", "properties": {"x": _num, "y": _num},
                                             "required": ["x", "y"], "additionalProperties": False}]}
ENDPOINT_SNAP = 5.0


def _obj(props: dict, required: Iterable[str] = ()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


SCHEMA = _obj({
    "schema_version": {"const": SCHEMA_VERSION},
    "name": {"type": "string"},
    "seed": {"type": "integer", "minimum": 0},
    "road": _obj({
        "nodes": {"type": "array", "items": _obj({"id": {"type": "integer"}, "x": _num, "y": _num},
                                                 ["id", "x", "y"])},
        "edges": {"type": "array", "items": _obj({
            "from": {"type": "integer"}, "to": {"type": "integer"}, "length": _pos,
            "road_class": _road_class, "lane_width": _pos, "speed_limit": _pos,
            "one_way": {"type": "boolean"}, "shape": {"type": "array", "items": _point},
        }, ["from", "to"])},
        "demonstrations": {"type": "array", "items": _obj({
            "points": {"type": "array", "items": _point, "minItems": 2},
            "road_class": _road_class, "speed_limit": _pos, "lane_width": _pos,
            "snap_radius": _pos, "one_way": {"type": "boolean"},
        }, ["points"])},
    }, ["nodes"]),
    "route": _obj({"start": _endpoint, "goal": _endpoint}, ["start", "goal"]),
    "ego": _obj({"x": _num, "y": _num, "heading": _num, "speed": _nonneg}),
    "vehicle": _obj({
        "footprint": _obj({"length": _pos, "width": _pos, "rear_axle_to_tail": _pos}),
        "kinematic": _obj({"wheelbase": _pos, "steer_limit": _pos, "steer_rate_limit": _pos}),
        "dynamic": _obj({"mass": _pos, "iz": _pos, "cf": _pos, "cr": _pos, "lf": _pos, "lr": _pos}),
        "limits": _obj({"v_max": _pos, "a_max": _pos, "a_min": {"type": "number", "exclusiveMaximum": 0},
                        "a_lat_max": _pos, "jerk_max": _pos}),
        "n_circles": {"type": "integer", "minimum": 1},
    }),
    "obstacles": {"type": "array", "items": _obj({
        "id": {"type": "string"},
        "footprint": {"type": "array", "items": _point, "minItems": 3},
        "schedule": {"type": "array", "minItems": 1, "items": _obj(
            {"t": _nonneg, "x": _num, "y": _num, "heading": _num}, ["t", "x", "y"])},
    }, ["id", "footprint", "schedule"])},
    "signals": {"type": "array", "items": _obj({
        "id": {"type": "string"}, "s": _nonneg, "x": _num, "y": _num,
        "red": {"type": "array", "items": {"type": "array", "items": _nonneg, "minItems": 2, "maxItems": 2}},
    }, ["red"])},
    "rates": _obj({"control_hz": {"type": "integer", "minimum": 1}, "plan_hz": {"type": "integer", "minimum": 1}}),
    "latency": _nonneg,
    "link": _obj({"dropouts": {"type": "array", "items": {"type": "array", "items": _nonneg,
                                                          "minItems": 2, "maxItems": 2}}}),
    "planner": _obj({
        "horizon_s": _pos, "n_layers": {"type": "integer", "minimum": 1},
        "offsets": {"type": "array", "items": _num, "minItems": 1},
        "speed_fractions": {"type": "array", "items": _pos, "minItems": 1},
        "weights": _obj({"smoothness": _nonneg, "end_offset": _nonneg, "obstacle": _nonneg, "speed_dev": _nonneg}),
        "safety_margin": _nonneg, "influence": _pos, "path_spacing": _pos, "corridor_half_width": _pos,
        "lookahead": _pos, "comfort_decel": {"type": "number", "exclusiveMaximum": 0},
        "behavior": _obj({"follow_headway": _pos, "speed_margin": _nonneg, "hold": _nonneg,
                          "pullover_distance": _nonneg, "signal_lookahead": _pos, "standstill_gap": _nonneg,
                          "allow_rule_relaxation": {"type": "boolean"}}),
    }),
    "control": _obj({
        "horizon": {"type": "integer", "minimum": 2}, "dt": _pos, "switch_speed": _nonneg,
        "q": {"type": "array", "items": _nonneg, "minItems": 3, "maxItems": 3},
        "r": {"type": "array", "items": _nonneg, "minItems": 2, "maxItems": 2},
        "r_rate": {"type": "array", "items": _nonneg, "minItems": 2, "maxItems": 2},
        "pid": _obj({"kp": _num, "ki": _num, "kd": _num, "integral_clamp": _pos, "output_clamp": _pos}),
    }),
    "sim": _obj({"timeout": _pos, "goal_radius": _pos, "obstacle_noise": _nonneg,
                 "steer_tau": _pos, "speed_tau": _pos}),
}, ["schema_version", "road", "route"])


@dataclass(frozen=True)
class VehicleConfig:
    footprint: Footprint = Footprint(3.0, 1.2, 0.5)
    kinematic: KinematicModel = KinematicModel()
    dynamic: DynamicModel = DynamicModel()
    limits: DynamicLimits = DynamicLimits()
    n_circles: int = 3


@dataclass(frozen=True)
class PlannerConfig:
    lattice: LatticeParams = LatticeParams()
    weights: CostWeights = CostWeights()
    safety_margin: float = 0.3
    influence: float = 10.0
    path_spacing: float = 0.5
    corridor_half_width: float | None = None   # default: 1.5 lane widths
    lookahead: float = 50.0
    comfort_decel: float = -1.0
    behavior: BehaviorParams = BehaviorParams()


@dataclass(frozen=True)
class ControlConfig:
    mpc: MpcConfig = MpcConfig()
    pid: PidGains = PidGains()
    switch_speed: float = 3.0


@dataclass(frozen=True)
class SimConfig:
    timeout: float = 120.0
    goal_radius: float = 1.0
    obstacle_noise: float = 0.0
    steer_tau: float = 0.1
    speed_tau: float = 0.2


@dataclass(frozen=True)
class LightSpec:
    red: tuple[tuple[float, float], ...]
    s: float | None = None
    xy: tuple[float, float] | None = None


@dataclass(frozen=True)
class Scenario:
    name: str
    graph: RoadGraph
    start: int
    goal: int
    ego: dict = field(default_factory=dict)
    vehicle: VehicleConfig = VehicleConfig()
    obstacles: tuple[Obstacle, ...] = ()
    lights: tuple[LightSpec, ...] = ()
    control_hz: int = 100
    plan_hz: int = 10
    latency: float = 0.0
    dropouts: tuple[tuple[float, float], ...] = ()
    planner: PlannerConfig = PlannerConfig()
    control: ControlConfig = ControlConfig()
    sim: SimConfig = SimConfig()
    seed: int = 0
    raw: dict = field(default_factory=dict, compare=False, repr=False)


def _fmt_path(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def validate(doc: Mapping[str, Any]) -> list[tuple[str, str]]:
    """All problems in a scenario document as ``(field_path, message)`` pairs."""
    errors = []
    validator = jsonschema.Draft202012Validator(SCHEMA)
    for err in sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path))):
        errors.append((_fmt_path(err.absolute_path), err.message))
    if errors:
        return errors
    rates = doc.get("rates", {})
    chz, phz = rates.get("control_hz", 100), rates.get("plan_hz", 10)
    if chz < phz:
        errors.append(("rates", "control_hz must be >= plan_hz"))
    elif chz % phz:
        errors.append(("rates", "control_hz must be an integer multiple of plan_hz"))
    road = doc["road"]
    ids = [n["id"] for n in road["nodes"]]
    if len(set(ids)) != len(ids):
        errors.append(("road.nodes", "duplicate node ids"))
    idset = set(ids)
    for i, e in enumerate(road.get("edges", [])):
        for key in ("from", "to"):
            if e[key] not in idset:
                errors.append((f"road.edges[{i}].{key}", f"unknown node id {e[key]}"))
    for key in ("start", "goal"):
        if isinstance(doc["route"][key], int) and doc["route"][key] not in idset:
            errors.append((f"route.{key}", f"unknown node id {doc['route'][key]}"))
    for i, ob in enumerate(doc.get("obstacles", [])):
        if not is_convex_ccw(ob["footprint"]):
            errors.append((f"obstacles[{i}].footprint", "must be a convex counter-clockwise polygon"))
        ts = [w["t"] for w in ob["schedule"]]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            errors.append((f"obstacles[{i}].schedule", "times must strictly increase"))
    for i, sg in enumerate(doc.get("signals", [])):
        if "s" not in sg and not ("x" in sg and "y" in sg):
            errors.append((f"signals[{i}]", "needs either s or both x and y"))
    for i, w in enumerate(doc.get("link", {}).get("dropouts", [])):
        if w[1] <= w[0]:
            errors.append((f"link.dropouts[{i}]", "window end must follow its start"))
    fp = doc.get("vehicle", {}).get("footprint")
    if fp and {"length", "rear_axle_to_tail"} <= fp.keys() and fp["length"] <= fp["rear_axle_to_tail"]:
        errors.append(("vehicle.footprint", "length must exceed rear_axle_to_tail"))
    veh = doc.get("vehicle", {})
    wb = veh.get("kinematic", {}).get("wheelbase", KinematicModel.wheelbase)
    dyn = veh.get("dynamic", {})
    axles = dyn.get("lf", DynamicModel.lf) + dyn.get("lr", DynamicModel.lr)
    if abs(axles - wb) > 1e-6 * max(wb, 1.0):
        errors.append(("vehicle.dynamic", f"lf + lr = {axles:g} must equal the wheelbase {wb:g}"))
    return errors


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(doc: Mapping[str, Any], overrides) -> dict:
    """Copy of ``doc`` with dotted-key overrides applied (``"rates.plan_hz=5"`` or a mapping)."""
    out = copy.deepcopy(dict(doc))
    if not overrides:
        return out
    if isinstance(overrides, Mapping):
        items = list(overrides.items())
    else:
        items = []
        for o in overrides:
            key, sep, raw = o.partition("=")
            if not sep or not key:
                raise ScenarioError([("<override>", f"expected key=value, got {o!r}")])
            items.append((key, _parse_value(raw)))
    for key, value in items:
        node = out
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ScenarioError([(key, f"cannot override inside non-object field {p!r}")])
        node[parts[-1]] = value
    return out


def _kw(cls, d: Mapping | None, **convert):
    if not d:
        return cls()
    vals = {k: (convert[k](v) if k in convert else v) for k, v in d.items()}
    return cls(**vals)


def _resolve_endpoint(graph: RoadGraph, ep, path: str) -> int:
    if isinstance(ep, int):
        return ep
    best, best_d = None, ENDPOINT_SNAP
    for nid, xy in sorted(graph.nodes.items()):
        d = math.dist(xy, (ep["x"], ep["y"]))
        if d <= best_d:
            best, best_d = nid, d
    if best is None:
        raise ScenarioError([(path, f"no node within {ENDPOINT_SNAP} m of ({ep['x']}, {ep['y']})")])
    return best


def from_dict(doc: Mapping[str, Any]) -> Scenario:
    errors = validate(doc)
    if errors:
        raise ScenarioError(errors)
    road = doc["road"]
    nodes = {n["id"]: (n["x"], n["y"]) for n in road["nodes"]}
    edges = []
    for e in road.get("edges", []):
        e = dict(e)
        e["frm"] = e.pop("from")
        edges.append(e)
    try:
        graph = RoadGraph.build(nodes, edges)
        for demo in road.get("demonstrations", []):
            demo = dict(demo)
            pts = demo.pop("points")
            graph = add_demonstration(graph, pts, demo.pop("road_class", RoadClass.UNSTRUCTURED.value), **demo)
    except ValueError as exc:
        raise ScenarioError([("road", str(exc))]) from exc

    ends = {key: _resolve_endpoint(graph, doc["route"][key], f"route.{key}") for key in ("start", "goal")}

    v = doc.get("vehicle", {})
    vehicle = VehicleConfig(
        _kw(Footprint, v.get("footprint")) if v.get("footprint") else VehicleConfig.footprint,
        _kw(KinematicModel, v.get("kinematic")),
        _kw(DynamicModel, v.get("dynamic")),
        _kw(DynamicLimits, v.get("limits")),
        v.get("n_circles", 3),
    )
    if v.get("footprint"):
        base = VehicleConfig.footprint
        f = v["footprint"]
        vehicle = VehicleConfig(Footprint(f.get("length", base.length), f.get("width", base.width),
                                          f.get("rear_axle_to_tail", base.rear_axle_to_tail)),
                                vehicle.kinematic, vehicle.dynamic, vehicle.limits, vehicle.n_circles)

    obstacles = []
    for ob in doc.get("obstacles", []):
        sched = tuple((w["t"], Pose2D(w["x"], w["y"], w.get("heading", 0.0))) for w in ob["schedule"])
        obstacles.append(Obstacle(ob["id"], tuple(map(tuple, ob["footprint"])), sched))
    lights = tuple(LightSpec(tuple(map(tuple, sg["red"])), sg.get("s"),
                             (sg["x"], sg["y"]) if "x" in sg else None) for sg in doc.get("signals", []))

    p = doc.get("planner", {})
    lat = LatticeParams()
    lattice = LatticeParams(p.get("horizon_s", lat.horizon_s), p.get("n_layers", lat.n_layers),
                            tuple(p.get("offsets", lat.offsets)), tuple(p.get("speed_fractions", lat.speed_fractions)))
    planner = PlannerConfig(lattice, _kw(CostWeights, p.get("weights")), p.get("safety_margin", 0.3),
                            p.get("influence", 10.0), p.get("path_spacing", 0.5), p.get("corridor_half_width"),
                            p.get("lookahead", 50.0), p.get("comfort_decel", -1.0),
                            _kw(BehaviorParams, p.get("behavior")))
    c = doc.get("control", {})
    limits = vehicle.limits
    mpc_kw = {k: tuple(c[k]) if isinstance(c[k], list) else c[k] for k in ("horizon", "dt", "q", "r", "r_rate") if k in c}
    mpc = MpcConfig(v_max=limits.v_max, a_min=limits.a_min, a_max=limits.a_max, **mpc_kw)
    control = ControlConfig(mpc, _kw(PidGains, c.get("pid")), c.get("switch_speed", 3.0))
    rates = doc.get("rates", {})
    return Scenario(
        name=doc.get("name", "scenario"), graph=graph, start=ends["start"], goal=ends["goal"],
        ego=dict(doc.get("ego", {})), vehicle=vehicle, obstacles=tuple(obstacles), lights=lights,
        control_hz=rates.get("control_hz", 100), plan_hz=rates.get("plan_hz", 10),
        latency=doc.get("latency", 0.0),
        dropouts=tuple(tuple(w) for w in doc.get("link", {}).get("dropouts", [])),
        planner=planner, control=control, sim=_kw(SimConfig, doc.get("sim")), seed=doc.get("seed", 0),
        raw=copy.deepcopy(dict(doc)),
    )


def load(path, overrides=None) -> Scenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError([("<root>", f"{path}: invalid JSON ({exc})")]) from exc
    return from_dict(apply_overrides(doc, overrides))
