"""Run metrics, intervention counting and fleet operations arithmetic."""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Iterable, Sequence

from ..behavior import ManeuverKind
from ..errors import InvalidArgument

INTERVENTION_CAUSES = frozenset({"no_feasible", "clearance", "dropout"})
MERGE_WINDOW = 5.0


@dataclass(frozen=True)
class Metrics:
    completed: bool = False
    cross_track_rms: float = 0.0
    cross_track_max: float = 0.0
    min_clearance: float = 0.0
    interventions: int = 0
    avg_speed: float = 0.0
    distance: float = 0.0
    plan_cycle_p95: float = 0.0   # milliseconds

    def to_dict(self) -> dict:
        return asdict(self)


def count_interventions(records: Iterable, merge_window: float = MERGE_WINDOW,
                        causes: frozenset = INTERVENTION_CAUSES) -> int:
    """Entries into EmergencyStop with a qualifying cause; triggers within ``merge_window`` s merge.

    ``records`` are per-tick items with ``t``, ``maneuver`` and ``cause``.
    """
    count, last, prev_kind = 0, None, None
    for r in records:
        kind = ManeuverKind(r.maneuver)
        if kind is ManeuverKind.EMERGENCY_STOP and prev_kind is not ManeuverKind.EMERGENCY_STOP \
                and r.cause in causes:
            if last is None or r.t - last > merge_window:
                count += 1
            last = r.t
        prev_kind = kind
    return count


@dataclass(frozen=True)
class TaskRecord:
    city: str
    task: str
    distance_km: float
    duration_min: float
    payload_kg: float | None = None

    def __post_init__(self):
        if not (self.distance_km > 0 and self.duration_min > 0):
            raise InvalidArgument(f"task {self.task!r}: distance and duration must be positive")


@dataclass(frozen=True)
class OpsSummary:
    avg_km: Decimal
    tasks: int
    contacts_per_vehicle: int
    fleet_contacts: int


def _dec(x) -> Decimal:
    return Decimal(str(x))


def ops_metrics(records: Sequence[TaskRecord], total_km_per_vehicle: float, fleet_size: int,
                contacts_per_task: int) -> OpsSummary:
    """Contacts avoided by contact-less delivery, rounding the mean distance to 0.1 km first.

    Decimal arithmetic with half-up rounding keeps e.g. 2500 / 3.7 = 675.68 -> 676.
    """
    if not records:
        raise InvalidArgument("need at least one task record")
    if not (total_km_per_vehicle > 0 and fleet_size > 0 and contacts_per_task > 0):
        raise InvalidArgument("total distance, fleet size and contacts per task must be positive")
    mean = sum(_dec(r.distance_km) for r in records) / len(records)
    avg = mean.quantize(Decimal("0.1"), rounding=ROUND_HALF_UP)
    if avg == 0:
        raise InvalidArgument("mean task distance rounds to zero")
    tasks = int((_dec(total_km_per_vehicle) / avg).quantize(Decimal("1"), rounding=ROUND_HALF_UP))
    per_vehicle = int(contacts_per_task) * tasks
    return OpsSummary(avg, tasks, per_vehicle, int(fleet_size) * per_vehicle)


def read_tasks(path) -> list[TaskRecord]:
    """CSV with header ``city,task,distance_km,duration_min[,payload_kg]``."""
    path = Path(path)
    out = []
    try:
        with open(path, newline="", encoding="utf-8") as f:
            for i, row in enumerate(csv.DictReader(f), start=2):
                try:
                    payload = row.get("payload_kg") or None
                    out.append(TaskRecord(row["city"], row["task"], float(row["distance_km"]),
                                          float(row["duration_min"]), float(payload) if payload else None))
                except (KeyError, TypeError, ValueError) as exc:
                    raise InvalidArgument(f"{path}:{i}: bad task row ({exc})") from exc
    except OSError as exc:
        raise InvalidArgument(f"{path}: {exc}") from exc
    return out
