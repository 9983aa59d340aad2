import json

import numpy as np
import pytest

from navstack.calib import CornerScene, make_pair, read_calibration, read_cloud, rotation_angle, write_xyz
from navstack.cli import EXIT_INCOMPLETE, EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, main
from navstack.sim import library


def write_doc(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def test_validate_ok_and_invalid(tmp_path, capsys):
    good = write_doc(tmp_path / "ok.json", library.straight())
    assert main(["validate", "--scenario", good]) == EXIT_OK
    doc = library.straight()
    doc["rates"] = {"control_hz": 100, "plan_hz": 30}
    bad = write_doc(tmp_path / "bad.json", doc)
    assert main(["validate", "--scenario", bad]) == EXIT_INVALID
    assert "rates:" in capsys.readouterr().err
    (tmp_path / "junk.json").write_text("{not json")
    assert main(["validate", "--scenario", str(tmp_path / "junk.json")]) == EXIT_INVALID


def test_run_writes_artifacts(tmp_path, capsys):
    sc = write_doc(tmp_path / "s.json", library.straight(20.0))
    out = tmp_path / "out"
    assert main(["run", "--scenario", sc, "--out", str(out), "--seed", "3"]) == EXIT_OK
    assert {p.name for p in out.iterdir()} == {"trajectory.csv", "metrics.json", "path.svg"}
    printed = json.loads(capsys.readouterr().out)
    assert printed == json.loads((out / "metrics.json").read_text())


def test_run_incomplete_and_invalid(tmp_path):
    sc = write_doc(tmp_path / "w.json", library.wall())
    assert main(["run", "--scenario", sc, "--out", str(tmp_path / "w"), "--override", "sim.timeout=5"]) \
        == EXIT_INCOMPLETE
    assert main(["run", "--scenario", sc, "--out", str(tmp_path / "x"), "--override", "latency=-1"]) == EXIT_INVALID


def test_run_runtime_failure(tmp_path, capsys):
    doc = library.straight()
    doc["road"]["edges"][0]["one_way"] = True
    doc["route"] = {"start": 1, "goal": 0}
    sc = write_doc(tmp_path / "r.json", doc)
    assert main(["run", "--scenario", sc, "--out", str(tmp_path / "o")]) == EXIT_RUNTIME
    assert capsys.readouterr().err.startswith("error:")


def test_bad_seed_is_usage_error(tmp_path):
    sc = write_doc(tmp_path / "s.json", library.straight())
    with pytest.raises(SystemExit):
        main(["run", "--scenario", sc, "--out", str(tmp_path), "--seed", "-1"])


def test_metrics_command(tmp_path, capsys):
    from importlib import resources
    tasks = str(resources.files("navstack") / "data" / "delivery_tasks.csv")
    assert main(["metrics", "--tasks", tasks, "--total-km", "2500", "--fleet", "25", "--contacts", "4"]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out == {"avg_km": 3.7, "tasks": 676, "contacts_per_vehicle": 2704, "fleet_contacts": 67600}
    assert main(["metrics", "--tasks", tasks, "--total-km", "0", "--fleet", "25", "--contacts", "4"]) == EXIT_INVALID


def test_calib_command(tmp_path):
    ca, cb, truth = make_pair(0, CornerScene(noise=0.01))
    scene = tmp_path / "scene"
    scene.mkdir()
    write_xyz(scene / "base.xyz", ca)
    write_xyz(scene / "left.xyz", cb)
    out = tmp_path / "T.txt"
    fused = tmp_path / "fused.xyz"
    assert main(["calib", "--scene", str(scene), "--out", str(out), "--fused", str(fused)]) == EXIT_OK
    T = read_calibration(out)
    assert np.degrees(rotation_angle(T.R.T @ truth.R)) < 0.5
    assert np.linalg.norm(T.t - truth.t) < 0.02
    assert len(read_cloud(fused)) == len(ca) + len(cb)


def test_calib_needs_two_clouds(tmp_path):
    assert main(["calib", "--scene", str(tmp_path), "--out", str(tmp_path / "T.txt")]) == EXIT_INVALID
