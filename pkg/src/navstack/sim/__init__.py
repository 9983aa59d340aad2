"""Deterministic closed-loop simulator, metrics and export."""
from .export import METRICS_FILE, PLOT_FILE, TRAJECTORY_FILE, export, metrics_json
from .metrics import Metrics, OpsSummary, TaskRecord, count_interventions, ops_metrics, read_tasks
from .plant import DelayLine, PlantParams, latency_ticks, step_plant
from .runner import PlanRecord, SimLog, Simulation, TickRecord, compute_metrics, run_scenario
from .scenario import SCHEMA, Scenario, apply_overrides, from_dict, load, validate

__all__ = [
    "METRICS_FILE", "PLOT_FILE", "TRAJECTORY_FILE", "export", "metrics_json",
    "Metrics", "OpsSummary", "TaskRecord", "count_interventions", "ops_metrics", "read_tasks", "DelayLine",
    "PlantParams", "latency_ticks", "step_plant", "PlanRecord", "SimLog", "Simulation", "TickRecord",
    "compute_metrics", "run_scenario", "SCHEMA", "Scenario", "apply_overrides", "from_dict", "load", "validate",
]
