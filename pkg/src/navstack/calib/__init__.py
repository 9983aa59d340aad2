"""Multi-LiDAR extrinsic calibration from a wall corner, and early fusion."""
from .cloud import PointCloud3D, RigidTransform3D, orthonormalize, rotation_angle, rotvec_to_matrix
from .fusion import fuse_to_base
from .io import (format_calibration, read_calibration, read_cloud, read_pcd, read_xyz, write_calibration,
                 write_pcd, write_xyz)
from .planes import PlaneMatch, PlaneModel, RansacParams, check_corner, fit_corner_planes, match_planes
from .registration import (IcpParams, IcpResult, PairCalibration, calibrate_pair, icp_refine, kabsch_init,
                           kabsch_rotation)
from .synth import CornerScene, make_pair, observe, random_pose, transform_planes

__all__ = [
    "PointCloud3D", "RigidTransform3D", "orthonormalize", "rotation_angle", "rotvec_to_matrix", "fuse_to_base",
    "format_calibration", "read_calibration", "read_cloud", "read_pcd", "read_xyz", "write_calibration",
    "write_pcd", "write_xyz", "PlaneMatch", "PlaneModel", "RansacParams", "check_corner", "fit_corner_planes",
    "match_planes", "IcpParams", "IcpResult", "PairCalibration", "calibrate_pair", "icp_refine", "kabsch_init",
    "kabsch_rotation", "CornerScene", "make_pair", "observe", "random_pose", "transform_planes",
]
