"""Run artifacts: trajectory.csv, metrics.json and path.svg."""
from __future__ import annotations

import json
from pathlib import Path

from ..plotting import render_path_svg
from .metrics import Metrics
from .runner import SimLog

TRAJECTORY_FILE = "trajectory.csv"
METRICS_FILE = "metrics.json"
PLOT_FILE = "path.svg"


def metrics_json(metrics: Metrics) -> str:
    return json.dumps(metrics.to_dict(), indent=2, sort_keys=True) + "\n"


def export(log_: SimLog, metrics: Metrics, out_dir) -> dict[str, Path]:
    """Write the three artifacts; byte-identical for identical inputs."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"{out}: cannot create output directory ({exc.strerror})") from exc
    files = {
        TRAJECTORY_FILE: log_.csv_text(),
        METRICS_FILE: metrics_json(metrics),
        PLOT_FILE: render_path_svg(log_),
    }
    paths = {}
    for name, text in files.items():
        path = out / name
        try:
            with open(path, "w", encoding="utf-8", newline="\n") as f:
                f.write(text)
        except OSError as exc:
            raise OSError(f"{path}: {exc.strerror}") from exc
        paths[name] = path
    return paths
