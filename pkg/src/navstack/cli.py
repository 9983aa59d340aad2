"""``simctl``: run scenarios, calibrate LiDARs, compute fleet metrics, validate scenario files.

Exit codes: 0 success, 1 validation error, 2 runtime failure, 3 task incomplete.
Set ``SIMCTL_LOG`` to a logging level name (default WARNING).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .errors import InvalidArgument, NavError, ScenarioError

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_INCOMPLETE = 0, 1, 2, 3
CLOUD_SUFFIXES = (".xyz", ".pcd")

log = logging.getLogger("simctl")


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _report_invalid(exc: ScenarioError) -> int:
    for path, msg in exc.errors:
        print(f"{path}: {msg}", file=sys.stderr)
    return EXIT_INVALID


def cmd_run(args) -> int:
    from .sim import export, load, run_scenario

    try:
        sc = load(args.scenario, args.override)
    except ScenarioError as exc:
        return _report_invalid(exc)
    log_, metrics = run_scenario(sc, seed=args.seed)
    paths = export(log_, metrics, args.out)
    print(json.dumps(metrics.to_dict(), sort_keys=True))
    for p in paths.values():
        log.info("wrote %s", p)
    return EXIT_OK if metrics.completed else EXIT_INCOMPLETE


def cmd_validate(args) -> int:
    from .sim import validate

    try:
        doc = json.loads(Path(args.scenario).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        print(f"<root>: invalid JSON ({exc})", file=sys.stderr)
        return EXIT_INVALID
    if not isinstance(doc, dict):
        print("<root>: scenario must be a JSON object", file=sys.stderr)
        return EXIT_INVALID
    errors = validate(doc)
    if errors:
        return _report_invalid(ScenarioError(errors))
    print(f"{args.scenario}: ok")
    return EXIT_OK


def cmd_metrics(args) -> int:
    from .sim import ops_metrics, read_tasks

    try:
        summary = ops_metrics(read_tasks(args.tasks), args.total_km, args.fleet, args.contacts)
    except InvalidArgument as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INVALID
    print(json.dumps({"avg_km": float(summary.avg_km), "tasks": summary.tasks,
                      "contacts_per_vehicle": summary.contacts_per_vehicle,
                      "fleet_contacts": summary.fleet_contacts}, indent=2))
    return EXIT_OK


def _calib_targets(out: Path, sensors: list[str]) -> dict[str, Path]:
    if len(sensors) == 1:
        return {sensors[0]: out}
    return {s: out.with_name(f"{out.stem}_{s}{out.suffix}") for s in sensors}


def cmd_calib(args) -> int:
    from .calib import calibrate_pair, fuse_to_base, read_cloud, write_calibration, write_xyz
    from .calib.cloud import RigidTransform3D

    scene = Path(args.scene)
    files = sorted(p for p in scene.iterdir() if p.suffix.lower() in CLOUD_SUFFIXES) if scene.is_dir() else []
    if len(files) < 2:
        print(f"{scene}: need a directory with at least two .xyz/.pcd clouds", file=sys.stderr)
        return EXIT_INVALID
    clouds = {p.stem: read_cloud(p) for p in files}
    base_id = args.base or ("base" if "base" in clouds else files[0].stem)
    if base_id not in clouds:
        print(f"{scene}: no cloud named {base_id!r}", file=sys.stderr)
        return EXIT_INVALID
    others = [s for s in clouds if s != base_id]
    extrinsics = {base_id: RigidTransform3D.identity()}
    status = EXIT_OK
    for sensor, path in _calib_targets(Path(args.out), others).items():
        res = calibrate_pair(clouds[base_id], clouds[sensor])
        if res.icp.diverged:
            log.warning("%s: ICP diverged; writing best-so-far estimate", sensor)
            status = EXIT_RUNTIME
        path.parent.mkdir(parents=True, exist_ok=True)
        write_calibration(path, res.transform)
        extrinsics[sensor] = res.transform
        h = res.icp.rms_history
        print(f"{sensor} -> {base_id}: {path} (ICP RMS {h[0]:.4g} -> {min(h):.4g} m in {res.icp.iterations} iterations)")
    if args.fused:
        fused = fuse_to_base([clouds[s] for s in clouds], extrinsics, base_id)
        write_xyz(args.fused, fused)
    return status


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="simctl", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate a scenario and export trajectory.csv, metrics.json, path.svg")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=_u64, default=None, help="overrides the scenario seed")
    p.add_argument("--out", required=True)
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted scenario key, value parsed as JSON when possible; repeatable")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("calib", help="calibrate every cloud in a directory against the base cloud")
    p.add_argument("--scene", required=True, help="directory of .xyz/.pcd clouds, one per sensor")
    p.add_argument("--out", required=True, help="calibration file; with several sensors, <stem>_<sensor><suffix>")
    p.add_argument("--base", default=None, help="base sensor id (default: 'base' or the first file)")
    p.add_argument("--fused", default=None, help="also write all clouds fused into the base frame (XYZ)")
    p.set_defaults(func=cmd_calib)

    p = sub.add_parser("metrics", help="avoided-contacts arithmetic from a task table")
    p.add_argument("--tasks", required=True)
    p.add_argument("--total-km", type=float, required=True)
    p.add_argument("--fleet", type=int, required=True)
    p.add_argument("--contacts", type=int, required=True)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("validate", help="check a scenario file against the schema")
    p.add_argument("--scenario", required=True)
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    level = os.environ.get("SIMCTL_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        return _report_invalid(exc)
    except (NavError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
