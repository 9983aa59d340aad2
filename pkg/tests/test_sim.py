import json
import math
from decimal import Decimal
from importlib import resources
from types import SimpleNamespace

import numpy as np
import pytest

from navstack.control import ControlCommand
from navstack.core import Pose2D, VehicleState
from navstack.errors import InvalidArgument, ScenarioError
from navstack.sim import (DelayLine, Metrics, PlantParams, SimLog, TaskRecord,
                          apply_overrides, count_interventions, export, from_dict, latency_ticks, ops_metrics,
                          read_tasks, run_scenario, step_plant, validate)
from navstack.sim import library
from navstack.sim.runner import CSV_HEADER

TASKS = resources.files("navstack") / "data" / "delivery_tasks.csv"


# ---------------------------------------------------------------- plant

def test_plant_at_rest_stays_put():
    s0 = VehicleState(Pose2D(1.0, 2.0, 0.3), 0.0)
    s = step_plant(s0, ControlCommand(0.0, speed_cmd=0.0), 0.01)
    assert s.pose == s0.pose and s.speed == 0.0 and s.timestamp == pytest.approx(0.01)


def test_plant_constant_speed_distance():
    s = VehicleState(Pose2D(0.0, 0.0, 0.0), 1.0)
    for _ in range(100):
        s = step_plant(s, ControlCommand(0.0, speed_cmd=1.0), 0.01)
    assert s.pose.x == pytest.approx(1.0, abs=1e-9) and s.pose.y == 0.0


def test_plant_constant_steer_closes_circle():
    p = PlantParams()
    delta = 0.2
    radius = p.wheelbase / math.tan(delta)
    v = 2 * math.pi * radius / 20.0  # one lap in exactly 2000 steps
    s = VehicleState(Pose2D(0.0, 0.0, 0.0), v, steer_angle=delta)
    for _ in range(2000):
        s = step_plant(s, ControlCommand(delta, speed_cmd=v), 0.01, params=p)
    assert math.hypot(s.pose.x, s.pose.y) < 1e-4


def test_plant_brakes_to_standstill():
    s = VehicleState(Pose2D(0.0, 0.0, 0.0), 0.5)
    s = step_plant(s, ControlCommand(0.0, accel_cmd=-2.0), 1.0)
    assert s.speed == 0.0
    assert s.pose.x == pytest.approx(0.5 ** 2 / 4.0, abs=1e-9)
    with pytest.raises(InvalidArgument):
        step_plant(s, ControlCommand(0.0), 0.0)


# --------------------------------------------------------------- timing

def test_latency_ticks():
    assert latency_ticks(0.04, 100) == 4
    assert latency_ticks(0.0, 100) == 0
    for lat, ticks in [(0.03, 3), (0.045, 5), (0.06, 6)]:
        assert latency_ticks(lat, 100) == ticks


def test_delay_line_shifts_by_ticks():
    zero = ControlCommand(0.0)
    for n in (0, 1, 4):
        dl = DelayLine(n, zero)
        out = [dl.push(ControlCommand(float(k))).steer_angle for k in range(10)]
        assert out == [0.0] * n + [float(k) for k in range(10 - n)]
    with pytest.raises(InvalidArgument):
        DelayLine(-1, zero)


# -------------------------------------------------------- interventions

def rec(t, maneuver="LaneKeep", cause=None):
    return SimpleNamespace(t=t, maneuver=maneuver, cause=cause)


def triggers(times, dt=0.1, length=1.0, cause="dropout"):
    out = []
    for k in range(int(max(times) / dt) + 30):
        t = k * dt
        hit = any(a <= t < a + length for a in times)
        out.append(rec(t, "EmergencyStop" if hit else "LaneKeep", cause if hit else None))
    return out


def test_interventions_merge_rule():
    assert count_interventions([rec(0.1 * k) for k in range(100)]) == 0
    assert count_interventions(triggers([1.0])) == 1
    assert count_interventions(triggers([1.0, 4.0])) == 1
    assert count_interventions(triggers([1.0, 11.0])) == 2
    # a stop for a red light or the goal is not an intervention
    assert count_interventions(triggers([1.0], cause="goal")) == 0


# ---------------------------------------------------------- ops metrics

def test_ops_metrics_table_data():
    tasks = read_tasks(TASKS)
    assert [t.distance_km for t in tasks] == [9.6, 5.4, 1.2, 0.6, 1.6, 4.0]
    s = ops_metrics(tasks, 2500, 25, 4)
    assert (s.avg_km, s.tasks, s.contacts_per_vehicle, s.fleet_contacts) == (Decimal("3.7"), 676, 2704, 67600)


def test_ops_metrics_small_cases():
    s = ops_metrics([TaskRecord("c", "t", 2.0, 10.0)], 10.0, 1, 1)
    assert (s.avg_km, s.tasks, s.fleet_contacts) == (Decimal("2.0"), 5, 5)
    s = ops_metrics([TaskRecord("c", "t", 1.0, 1.0), TaskRecord("c", "t", 2.0, 1.0)], 3.0, 2, 2)
    assert (s.avg_km, s.tasks, s.contacts_per_vehicle, s.fleet_contacts) == (Decimal("1.5"), 2, 4, 8)
    with pytest.raises(InvalidArgument):
        ops_metrics([], 10.0, 1, 1)
    with pytest.raises(InvalidArgument):
        TaskRecord("c", "t", 0.0, 1.0)


def test_read_tasks_bad_row(tmp_path):
    f = tmp_path / "t.csv"
    f.write_text("city,task,distance_km,duration_min\nA,B,x,3\n")
    with pytest.raises(InvalidArgument, match=":2:"):
        read_tasks(f)


# ------------------------------------------------------------ scenarios

def test_library_scenarios_validate():
    for name, build in library.ALL.items():
        assert validate(build()) == [], name


def test_validation_reports_field_paths():
    doc = library.straight()
    doc["rates"] = {"control_hz": 100, "plan_hz": 30}
    assert validate(doc) == [("rates", "control_hz must be an integer multiple of plan_hz")]
    doc = library.straight()
    doc["road"]["edges"][0]["to"] = 9
    assert validate(doc)[0][0] == "road.edges[0].to"
    doc = library.straight()
    doc["latency"] = -1
    assert validate(doc)[0][0] == "latency"
    doc = library.straight()
    doc["obstacles"] = [{"id": "o", "footprint": [[0, 0], [0, 1], [1, 0]], "schedule": [{"t": 0, "x": 0, "y": 0}]}]
    assert validate(doc)[0][0] == "obstacles[0].footprint"
    with pytest.raises(ScenarioError):
        from_dict({"schema_version": 1})


def test_overrides():
    doc = library.straight()
    out = apply_overrides(doc, ["rates.plan_hz=5", "name=x", "latency=0.04"])
    assert out["rates"]["plan_hz"] == 5 and out["name"] == "x" and out["latency"] == 0.04
    assert "rates" not in doc
    sc = from_dict(out)
    assert sc.plan_hz == 5 and sc.latency == 0.04
    with pytest.raises(ScenarioError):
        apply_overrides(doc, ["novalue"])


def test_point_endpoint_snaps_to_node():
    doc = library.straight()
    doc["route"]["goal"] = {"x": 49.0, "y": 1.0}
    assert from_dict(doc).goal == 1
    doc["route"]["goal"] = {"x": 30.0, "y": 0.0}
    with pytest.raises(ScenarioError):
        from_dict(doc)


# ------------------------------------------------------------------ runs

@pytest.fixture(scope="module")
def straight_run():
    return run_scenario(library.straight())


def test_straight_run(straight_run):
    log_, m = straight_run
    assert m.completed and m.interventions == 0
    assert m.cross_track_rms < 0.05
    assert log_.end_reason == "goal"
    assert all(b.tick == a.tick + 1 for a, b in zip(log_.ticks, log_.ticks[1:]))


def test_wall_run_stops_short():
    log_, m = run_scenario(library.wall())
    assert not m.completed and log_.end_reason == "timeout"
    assert m.min_clearance >= 0.3
    assert log_.ticks[-1].state.speed < 0.05


def test_export_artifacts(straight_run, tmp_path):
    log_, m = straight_run
    paths = export(log_, m, tmp_path / "a")
    lines = paths["trajectory.csv"].read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER) and len(lines) == len(log_.ticks) + 1
    assert Metrics(**json.loads(paths["metrics.json"].read_text())) == m
    assert paths["path.svg"].read_text().lstrip().startswith("<?xml")
    again = export(log_, m, tmp_path / "b")
    for name, p in paths.items():
        assert p.read_bytes() == again[name].read_bytes(), name


def test_export_empty_log(straight_run, tmp_path):
    log_ = straight_run[0]
    empty = SimLog("empty", 0, 100, 10, 0, log_.reference)
    paths = export(empty, Metrics(), tmp_path)
    assert paths["trajectory.csv"].read_text() == ",".join(CSV_HEADER) + "\n"


def test_seed_has_no_effect_without_noise():
    doc = library.straight(20.0)
    a = run_scenario(doc, seed=1)[0]
    b = run_scenario(doc, seed=2)[0]
    # no stochastic element in a noise-free scenario
    assert a.csv_text() == b.csv_text()
    assert np.isfinite([r.cross_track for r in a.ticks]).all()


def test_shipped_scenarios_match_builders():
    from pathlib import Path
    shipped = Path(__file__).resolve().parents[1] / "scenarios"
    for name, build in library.ALL.items():
        doc = json.loads((shipped / f"{name}.json").read_text())
        assert doc == build(), name
        assert "footprint" in doc["vehicle"] and "wheelbase" in doc["vehicle"]["kinematic"]
