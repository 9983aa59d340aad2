"""Deterministic SVG rendering of a simulated run."""
from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .behavior import ManeuverKind  # noqa: E402

_STYLE = {
    "svg.hashsalt": "navstack",     # stable element ids
    "svg.fonttype": "none",         # text stays text, no embedded glyph paths
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def intervention_points(log_) -> list[tuple[float, float]]:
    """Positions where the run entered EmergencyStop."""
    out, prev = [], None
    for r in log_.ticks:
        if r.maneuver == ManeuverKind.EMERGENCY_STOP.value and prev != r.maneuver:
            out.append((r.state.pose.x, r.state.pose.y))
        prev = r.maneuver
    return out


def render_path_svg(log_) -> str:
    """Reference path, driven path, obstacles (start footprint and track) and intervention markers."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(7.0, 4.5))
        ref = log_.reference
        ax.plot(ref.x, ref.y, color="0.6", lw=1.0, ls="--", label="reference")
        for ob in log_.obstacles:
            poly = ob.polygon_at(0.0)
            ax.fill(poly[:, 0], poly[:, 1], color="tab:red", alpha=0.4, lw=0)
            if not ob.is_static:
                track = np.array([[p.x, p.y] for _, p in ob.predicted_trajectory])
                ax.plot(track[:, 0], track[:, 1], color="tab:red", lw=0.8, ls=":")
        if log_.ticks:
            xy = np.array([[r.state.pose.x, r.state.pose.y] for r in log_.ticks])
            ax.plot(xy[:, 0], xy[:, 1], color="tab:blue", lw=1.5, label="driven")
        marks = intervention_points(log_)
        if marks:
            m = np.array(marks)
            ax.plot(m[:, 0], m[:, 1], "x", color="black", ms=8, mew=2, label="emergency stop")
        ax.set_aspect("equal", adjustable="datalim")
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        ax.set_title(log_.scenario)
        ax.legend(loc="best", frameon=False)
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None}, bbox_inches="tight")
        plt.close(fig)
    return buf.getvalue()
