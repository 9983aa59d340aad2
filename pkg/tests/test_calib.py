import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from navstack.calib import (CornerScene, PlaneModel, PointCloud3D, RansacParams, RigidTransform3D,
                            calibrate_pair, fit_corner_planes, format_calibration, fuse_to_base, icp_refine,
                            kabsch_init, make_pair, match_planes, read_calibration, read_cloud, rotation_angle,
                            rotvec_to_matrix, transform_planes, write_calibration, write_pcd, write_xyz)
from navstack.errors import (DegenerateCorner, InsufficientStructure, InvalidArgument,
                             MissingCalibration)

WORLD = CornerScene().world_planes()


def random_transform(rng, max_angle=math.pi, max_t=3.0):
    R = Rotation.from_rotvec(rng.normal(size=3) / np.sqrt(3) * rng.uniform(0, max_angle)).as_matrix()
    return RigidTransform3D(R, rng.uniform(-max_t, max_t, 3))


def errors(T, truth):
    rot = math.degrees(rotation_angle(T.R.T @ truth.R))
    return rot, float(np.linalg.norm(T.t - truth.t))


def assert_proper(T):
    assert np.abs(T.R.T @ T.R - np.eye(3)).max() < 1e-9
    assert np.linalg.det(T.R) > 0


# --------------------------------------------------------------- types

def test_types_validate():
    with pytest.raises(InvalidArgument):
        PointCloud3D([[0, 0, np.nan]])
    with pytest.raises(InvalidArgument):
        RigidTransform3D(np.diag([1, 1, -1]), np.zeros(3))
    pl = PlaneModel([0, 0, -2], -3.0)
    assert np.allclose(pl.normal, [0, 0, 1]) and pl.offset == 1.5


def test_rotvec_matches_scipy():
    rng = np.random.default_rng(1)
    for _ in range(50):
        w = rng.normal(size=3)
        np.testing.assert_allclose(rotvec_to_matrix(w), Rotation.from_rotvec(w).as_matrix(), atol=1e-12)


# -------------------------------------------------------------- planes

def corner_cloud(seed=0, noise=0.0, T=None):
    rng = np.random.default_rng(seed)
    pts = CornerScene(noise=noise).sample(rng)
    T = T or RigidTransform3D.identity()
    return PointCloud3D(T.inverse().apply(pts)), transform_planes(WORLD, T.inverse())


def normal_errors(found, truth):
    out = []
    for pl in truth:
        best = max(abs(float(f.normal @ pl.normal)) for f in found)
        out.append(math.acos(min(best, 1.0)))
    return out


def test_noiseless_planes_exact():
    T = RigidTransform3D(rotvec_to_matrix([0.1, -0.2, 2.0]), [2.0, 1.0, 1.0])
    cloud, truth = corner_cloud(0, 0.0, T)
    planes = fit_corner_planes(cloud)
    assert max(normal_errors(planes, truth)) < 1e-6
    assert all(pl.offset >= 0 and abs(np.linalg.norm(pl.normal) - 1) < 1e-9 for pl in planes)


def test_noisy_planes_within_half_degree():
    cloud, truth = corner_cloud(3, 0.01)
    planes = fit_corner_planes(cloud, RansacParams(inlier_tol=0.03))
    assert math.degrees(max(normal_errors(planes, truth))) < 0.5


def test_parallel_walls_degenerate():
    rng = np.random.default_rng(0)
    u, v = rng.uniform(0, 4, (2, 500))
    floor = np.column_stack([u, v, np.zeros(500)])
    w1 = np.column_stack([np.zeros(500), u, v / 2])
    w2 = np.column_stack([np.full(500, 4.0), u, v / 2])
    with pytest.raises(DegenerateCorner):
        fit_corner_planes(PointCloud3D(np.vstack([floor, w1, w2])))


def test_too_few_planes():
    rng = np.random.default_rng(0)
    u, v = rng.uniform(0, 4, (2, 500))
    with pytest.raises(InsufficientStructure):
        fit_corner_planes(PointCloud3D(np.column_stack([u, v, np.zeros(500)])))


def test_match_identity_and_reverse():
    m = match_planes(WORLD, WORLD)
    assert m.perm == (0, 1, 2) and m.score == pytest.approx(3.0)
    m = match_planes(WORLD, WORLD[::-1])
    assert m.perm == (2, 1, 0)


def test_match_rotated_about_z():
    T = RigidTransform3D(rotvec_to_matrix([0, 0, math.radians(10)]), [0.5, 0.2, 0.1])
    b = transform_planes(WORLD, T.inverse())
    shuffled = (b[2], b[0], b[1])
    assert match_planes(WORLD, shuffled).perm == (1, 2, 0)


@settings(max_examples=300)
@given(st.integers(0, 2**32 - 1))
def test_match_score_on_valid_triples(seed):
    # any triple that passes the degeneracy check reaches the acceptance score against an orthogonal corner
    rng = np.random.default_rng(seed)
    b = tuple(PlaneModel(n, 1.0) for n in rng.normal(size=(3, 3)))
    try:
        m = match_planes(WORLD, b)
    except DegenerateCorner:
        return
    assert 1.5 <= m.score <= 3.0 + 1e-12


# -------------------------------------------------------------- kabsch

def test_kabsch_identity():
    T = kabsch_init(WORLD, WORLD)
    np.testing.assert_allclose(T.R, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(T.t, 0.0, atol=1e-12)


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1))
def test_kabsch_exact_on_noiseless_planes(seed):
    rng = np.random.default_rng(seed)
    T = random_transform(rng)
    a = transform_planes(WORLD, random_transform(rng))
    b = transform_planes(a, T.inverse())  # b's frame maps into a's by T
    est = kabsch_init(a, b, match_planes(a, b, prior_rotation=T.R))
    assert_proper(est)
    np.testing.assert_allclose(est.R, T.R, atol=1e-9)
    np.testing.assert_allclose(est.t, T.t, atol=1e-9)


def test_kabsch_noisy_planes_before_refinement():
    for seed in range(10):
        ca, cb, truth = make_pair(seed, CornerScene(noise=0.01))
        pa, pb = fit_corner_planes(ca), fit_corner_planes(cb)
        init = kabsch_init(pa, pb, match_planes(pa, pb))
        rot, tr = errors(init, truth)
        assert rot < 1.0 and tr < 0.05


def test_kabsch_singular():
    flat = (PlaneModel([0, 0, 1], 0), PlaneModel([0, 0.01, 1], 1), PlaneModel([0, 1, 0], 0))
    with pytest.raises(DegenerateCorner):
        kabsch_init(flat, flat)


# ----------------------------------------------------------------- ICP

def test_icp_fixed_point_at_truth():
    ca, cb, truth = make_pair(0)
    res = icp_refine(ca, cb, truth)
    assert res.iterations <= 2
    rot, tr = errors(res.transform, truth)
    assert rot < 1e-3 and tr < 1e-5


def test_icp_from_perturbed_start():
    for seed in range(5):
        ca, cb, truth = make_pair(seed, CornerScene(noise=0.01))
        rng = np.random.default_rng(100 + seed)
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        off = rng.normal(size=3)
        off /= np.linalg.norm(off)
        pert = RigidTransform3D(rotvec_to_matrix(axis * math.radians(2)), off * 0.05)
        res = icp_refine(ca, cb, pert.compose(truth))
        rot, tr = errors(res.transform, truth)
        assert rot < 0.5 and tr < 0.02
        assert all(b <= a for a, b in zip(res.rms_history, res.rms_history[1:]))
        assert not res.diverged
        assert_proper(res.transform)


def test_full_pipeline_noisy_seeds():
    for seed in range(20):
        ca, cb, truth = make_pair(seed, CornerScene(noise=0.01))
        cal = calibrate_pair(ca, cb)
        rot, tr = errors(cal.transform, truth)
        assert rot < 0.5 and tr < 0.02, (seed, rot, tr)
        h = cal.icp.rms_history
        assert all(b <= a for a, b in zip(h, h[1:]))


def test_occluded_scene_still_calibrates():
    ca, cb, truth = make_pair(4, CornerScene(noise=0.01, occlusion=0.3))
    rot, tr = errors(calibrate_pair(ca, cb).transform, truth)
    assert rot < 0.5 and tr < 0.02


# -------------------------------------------------------------- fusion

def test_fusion_examples():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(50, 3))
    a = PointCloud3D(pts, "a")
    out = fuse_to_base([a], {"a": RigidTransform3D.identity()})
    np.testing.assert_array_equal(out.points, pts)
    b = PointCloud3D(pts, "b")
    shift = RigidTransform3D(np.eye(3), [1.0, 0.0, 0.0])
    out = fuse_to_base([a, b], {"a": RigidTransform3D.identity(), "b": shift})
    assert len(out) == 100
    np.testing.assert_array_equal(out.points[50:], pts + [1.0, 0.0, 0.0])
    assert out.point_sensor == ("a",) * 50 + ("b",) * 50
    with pytest.raises(MissingCalibration):
        fuse_to_base([b], {"a": shift})


# ------------------------------------------------------------------ IO

def test_cloud_io_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    cloud = PointCloud3D(rng.normal(size=(20, 3)), "s")
    for name, writer in [("c.xyz", write_xyz), ("c.pcd", write_pcd)]:
        writer(tmp_path / name, cloud)
        back = read_cloud(tmp_path / name)
        np.testing.assert_array_equal(back.points, cloud.points)
    write_pcd(tmp_path / "b.pcd", cloud, binary=True)
    np.testing.assert_array_equal(read_cloud(tmp_path / "b.pcd").points, cloud.points)


def test_calibration_file_format(tmp_path):
    T = RigidTransform3D(rotvec_to_matrix([0.1, 0.2, 0.3]), [1.0, -2.0, 0.5])
    text = format_calibration(T)
    lines = text.splitlines()
    assert len(lines) == 3 and all(len(line.split(" ")) == 4 for line in lines) and text.endswith("\n")
    write_calibration(tmp_path / "T.txt", T)
    back = read_calibration(tmp_path / "T.txt")
    np.testing.assert_array_equal(back.t, T.t)
    np.testing.assert_allclose(back.R, T.R, atol=1e-15)
    (tmp_path / "bad.txt").write_text("1 2 3")
    with pytest.raises(InvalidArgument):
        read_calibration(tmp_path / "bad.txt")
