"""Early fusion: every sensor's cloud moved into the base frame."""
from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from ..errors import MissingCalibration
from .cloud import PointCloud3D, RigidTransform3D


def fuse_to_base(clouds: Sequence[PointCloud3D], extrinsics: Mapping[str, RigidTransform3D],
                 base_id: str = "base") -> PointCloud3D:
    """Concatenate transformed clouds; per-point sensor ids are kept in ``point_sensor``."""
    missing = [c.sensor_id for c in clouds if c.sensor_id not in extrinsics]
    if missing:
        raise MissingCalibration(f"no extrinsic for sensor(s) {', '.join(map(repr, missing))}")
    parts, prov = [], []
    for c in clouds:
        parts.append(extrinsics[c.sensor_id].apply(c.points))
        prov.extend(c.point_sensor or (c.sensor_id,) * len(c))
    pts = np.vstack(parts) if parts else np.zeros((0, 3))
    return PointCloud3D(pts, base_id, tuple(prov))
