"""Builders for the reference scenarios shipped in ``scenarios/``."""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .scenario import SCHEMA_VERSION


# small delivery vehicle; every shipped scenario declares its chassis explicitly
VEHICLE = {
    "footprint": {"length": 3.0, "width": 1.2, "rear_axle_to_tail": 0.5},
    "kinematic": {"wheelbase": 1.9, "steer_limit": 0.55, "steer_rate_limit": 0.8},
    "dynamic": {"mass": 800.0, "iz": 700.0, "cf": 40000.0, "cr": 40000.0, "lf": 0.95, "lr": 0.95},
    "limits": {"v_max": 5.0, "a_max": 1.0, "a_min": -2.0, "a_lat_max": 1.5, "jerk_max": 2.0},
}


def _base(name: str, nodes, edges, start: int, goal: int, **extra) -> dict:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "name": name,
        "seed": 0,
        "road": {"nodes": [{"id": i, "x": float(x), "y": float(y)} for i, (x, y) in nodes.items()],
                 "edges": edges},
        "route": {"start": start, "goal": goal},
        "vehicle": json.loads(json.dumps(VEHICLE)),
    }
    doc.update(extra)
    return doc


def straight(length: float = 50.0, speed: float = 3.0, **extra) -> dict:
    return _base("straight", {0: (0.0, 0.0), 1: (length, 0.0)},
                 [{"from": 0, "to": 1, "road_class": "UrbanMain", "speed_limit": speed}], 0, 1,
                 sim={"timeout": 60.0}, **extra)


def circle(radius: float = 20.0, speed: float = 3.0, sweep: float = math.pi, **extra) -> dict:
    """Counter-clockwise arc of ``sweep`` radians starting at the bottom of a circle centered at the origin."""
    n = max(int(math.ceil(radius * sweep / 1.0)), 8)
    ang = -math.pi / 2 + np.linspace(0.0, sweep, n + 1)
    pts = np.column_stack([radius * np.cos(ang), radius * np.sin(ang)])
    shape = [[float(x), float(y)] for x, y in pts[1:-1]]
    return _base("circle", {0: tuple(pts[0]), 1: tuple(pts[-1])},
                 [{"from": 0, "to": 1, "road_class": "UrbanMain", "speed_limit": speed, "shape": shape}], 0, 1,
                 sim={"timeout": 90.0}, **extra)


def _box(length: float, width: float) -> list:
    hl, hw = length / 2, width / 2
    return [[-hl, -hw], [hl, -hw], [hl, hw], [-hl, hw]]


def wall(distance: float = 25.0, **extra) -> dict:
    """Barrier across the whole road ``distance`` m ahead; the route continues behind it."""
    doc = straight(60.0, 3.0, **extra)
    doc["name"] = "wall"
    doc["obstacles"] = [{"id": "wall", "footprint": _box(0.5, 12.0), "schedule": [{"t": 0, "x": distance, "y": 0}]}]
    doc["sim"] = {"timeout": 25.0}
    return doc


def dropout(window=(5.0, 7.0), **extra) -> dict:
    doc = straight(50.0, 3.0, **extra)
    doc["name"] = "dropout"
    doc["link"] = {"dropouts": [list(window)]}
    return doc


def overtake(**extra) -> dict:
    """A parked car in the lane with the adjacent lane free."""
    doc = straight(70.0, 3.0, **extra)
    doc["name"] = "overtake"
    doc["obstacles"] = [{"id": "parked", "footprint": _box(4.0, 1.8), "schedule": [{"t": 0, "x": 30.0, "y": 0.0}]}]
    return doc


def red_light(red=(0.0, 15.0), at: float = 30.0, **extra) -> dict:
    doc = straight(50.0, 3.0, **extra)
    doc["name"] = "red_light"
    doc["signals"] = [{"id": "tl", "s": at, "red": [list(red)]}]
    return doc


def desk(**extra) -> dict:
    """Reference load case: default 5x5 lattice with ten obstacles (static and moving) around the route."""
    doc = straight(120.0, 4.0, **extra)
    doc["name"] = "desk"
    rng = np.random.default_rng(7)
    obs = []
    for i in range(6):
        x = 20.0 + 15.0 * i
        y = float((-1) ** i * rng.uniform(3.2, 4.5))
        obs.append({"id": f"static{i}", "footprint": _box(1.0, 1.0), "schedule": [{"t": 0, "x": x, "y": y}]})
    for i in range(4):
        x0 = 30.0 + 20.0 * i
        y = float((-1) ** i * 5.0)
        obs.append({"id": f"walker{i}", "footprint": _box(0.6, 0.6),
                    "schedule": [{"t": 0, "x": x0, "y": y}, {"t": 40, "x": x0 + 20.0, "y": y}]})
    doc["obstacles"] = obs
    doc["sim"] = {"timeout": 60.0, "obstacle_noise": 0.05}
    return doc


def demonstration(**extra) -> dict:
    """An unstructured area reached through a driven demonstration polyline."""
    t = np.linspace(0.0, 1.0, 21)
    # lateral S-shift that leaves and rejoins the road heading tangentially
    pts = [[float(30.0 + 20.0 * u), float(4.0 * (1.0 - math.cos(math.pi * u)))] for u in t]
    doc = _base("demonstration", {0: (0.0, 0.0), 1: (30.0, 0.0)},
                [{"from": 0, "to": 1, "road_class": "Residential", "speed_limit": 3.0}], 0, 1,
                sim={"timeout": 60.0}, **extra)
    doc["road"]["demonstrations"] = [{"points": pts}]
    doc["route"]["goal"] = {"x": pts[-1][0], "y": pts[-1][1]}
    return doc


ALL = {"straight": straight, "circle": circle, "wall": wall, "dropout": dropout, "overtake": overtake,
       "red_light": red_light, "desk": desk, "demonstration": demonstration}


def write_all(directory) -> list[Path]:
    """Write every builder's default document as ``<name>.json``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, build in ALL.items():
        path = out / f"{name}.json"
        path.write_text(json.dumps(build(), indent=2) + "\n", encoding="utf-8")
        paths.append(path)
    return paths
