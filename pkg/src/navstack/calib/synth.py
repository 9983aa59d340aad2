"""Synthetic wall-corner scenes with known sensor poses."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud3D, RigidTransform3D, rotvec_to_matrix
from .planes import PlaneModel


@dataclass(frozen=True)
class CornerScene:
    """Floor plus two walls meeting at the world origin.

    The floor spans ``[0, width] x [0, depth]`` at z = 0, wall x = 0 spans
    ``y in [0, depth]``, wall y = 0 spans ``x in [0, width]``; walls rise to
    ``height``.
    """

    width: float = 4.0
    depth: float = 4.0
    height: float = 2.5
    points_per_plane: int = 500
    noise: float = 0.0
    occlusion: float = 0.0   # fraction of each plane hidden by a strip

    def world_planes(self) -> tuple[PlaneModel, ...]:
        return (PlaneModel([0, 0, 1], 0.0), PlaneModel([1, 0, 0], 0.0), PlaneModel([0, 1, 0], 0.0))

    def sample(self, rng) -> np.ndarray:
        n = self.points_per_plane
        out = []
        for axis, (e1, e2) in enumerate([(self.width, self.depth), (self.depth, self.height),
                                         (self.width, self.height)]):
            m = int(round(n / (1.0 - self.occlusion))) if self.occlusion else n
            u = rng.uniform(0, e1, m)
            v = rng.uniform(0, e2, m)
            if self.occlusion:
                lo = rng.uniform(0, e1 * (1 - self.occlusion))
                keep = (u < lo) | (u > lo + e1 * self.occlusion)
                u, v = u[keep], v[keep]
            z = np.zeros_like(u)
            if axis == 0:
                pts = np.column_stack([u, v, z])
            elif axis == 1:
                pts = np.column_stack([z, u, v])
            else:
                pts = np.column_stack([u, z, v])
            out.append(pts)
        pts = np.vstack(out)
        if self.noise:
            pts = pts + rng.normal(0.0, self.noise, pts.shape)
        return pts


def random_pose(rng, *, center=(2.0, 2.0, 1.2), spread: float = 0.3, yaw_range: float = 0.4) -> RigidTransform3D:
    """Sensor pose (sensor to world) looking into the corner from inside the room."""
    c = np.asarray(center) + rng.uniform(-spread, spread, 3)
    yaw = np.pi + np.pi / 4 + rng.uniform(-yaw_range, yaw_range)
    R = rotvec_to_matrix([0, 0, yaw]) @ rotvec_to_matrix(rng.uniform(-0.1, 0.1, 3))
    return RigidTransform3D(R, c)


def observe(world_pts, pose: RigidTransform3D, sensor_id: str = "") -> PointCloud3D:
    return PointCloud3D(pose.inverse().apply(world_pts), sensor_id)


def make_pair(seed: int, scene: CornerScene | None = None):
    """Two sensor clouds of the same corner and the true ``b -> a`` extrinsic."""
    scene = scene or CornerScene()
    rng = np.random.default_rng(seed)
    pose_a, pose_b = random_pose(rng), random_pose(rng)
    ca = observe(scene.sample(rng), pose_a, "a")
    cb = observe(scene.sample(rng), pose_b, "b")
    truth = pose_a.inverse().compose(pose_b)
    return ca, cb, truth


def transform_planes(planes, T: RigidTransform3D) -> tuple[PlaneModel, ...]:
    """Planes expressed in the frame ``T`` maps into."""
    out = []
    for pl in planes:
        n = T.R @ pl.normal
        out.append(PlaneModel(n, pl.offset + n @ T.t))
    return tuple(out)
