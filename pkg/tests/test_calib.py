"""Tests for the camera/projector model and planar-target calibration."""
import numpy as np
import pytest

from pipescan.calib import (
    CalibrationView,
    DegenerateViews,
    PinholeModel,
    StereoRig,
    apply_homography,
    calibrate_intrinsics,
    calibrate_stereo,
    fit_homography,
    load_pinhole,
    load_rig,
    save_pinhole,
    save_rig,
    transfer_points_to_projector,
)
from pipescan.geometry import RigidTransform, quat_from_rotvec


MODEL = PinholeModel(fx=434.6, fy=491.5, cx=255.5, cy=383.5,
                     k1=-0.05, k2=0.006, k3=-0.0008,
                     image_w=512, image_h=768)


# ---------------------------------------------------------------------------
# distortion
# ---------------------------------------------------------------------------

def test_distort_center_is_fixed_point():
    m = PinholeModel(fx=1, fy=1, cx=0, cy=0, k1=0.3, k2=-0.1, k3=0.05)
    np.testing.assert_allclose(m.distort([0.0, 0.0]), [0.0, 0.0])


def test_distort_zero_coefficients_identity():
    m = PinholeModel(fx=1, fy=1, cx=0, cy=0)
    p = np.array([[0.3, -0.7], [1.2, 0.4]])
    np.testing.assert_allclose(m.distort(p), p)


def test_distort_hand_value():
    # 0.5 * (1 + 0.1 * 0.25) = 0.5125
    m = PinholeModel(fx=1, fy=1, cx=0, cy=0, k1=0.1)
    np.testing.assert_allclose(m.distort([0.5, 0.0]), [0.5125, 0.0], atol=1e-15)


def test_undistort_round_trip():
    rng = np.random.default_rng(4)
    p = rng.uniform(-1, 1, size=(1000, 2))
    p /= np.maximum(1.0, np.linalg.norm(p, axis=1, keepdims=True))
    d = MODEL.distort(p)
    np.testing.assert_allclose(MODEL.undistort(d), p, atol=1e-10)


def test_undistort_trivials():
    m0 = PinholeModel(fx=1, fy=1, cx=0, cy=0)
    p = np.array([0.4, -0.2])
    np.testing.assert_allclose(m0.undistort(p), p)
    np.testing.assert_allclose(MODEL.undistort([0.0, 0.0]), [0.0, 0.0])


def test_project_on_axis_hits_principal_point():
    np.testing.assert_allclose(MODEL.project([0.0, 0.0, 100.0]),
                               [MODEL.cx, MODEL.cy], atol=1e-12)


def test_unproject_inverts_project():
    rng = np.random.default_rng(7)
    pts = np.column_stack([rng.uniform(-30, 30, 200),
                           rng.uniform(-45, 45, 200),
                           rng.uniform(80, 150, 200)])
    px = MODEL.project(pts)
    n = MODEL.unproject(px)
    np.testing.assert_allclose(n, pts[:, :2] / pts[:, 2:3], atol=1e-10)


# ---------------------------------------------------------------------------
# homographies
# ---------------------------------------------------------------------------

def test_homography_recovers_known_map():
    H_true = np.array([[1.2, 0.1, 5.0], [-0.05, 0.9, -3.0], [1e-4, -2e-4, 1.0]])
    rng = np.random.default_rng(11)
    src = rng.uniform(-50, 50, size=(40, 2))
    dst = apply_homography(H_true, src)
    H = fit_homography(src, dst)
    np.testing.assert_allclose(H, H_true, atol=1e-9)


# ---------------------------------------------------------------------------
# intrinsic calibration
# ---------------------------------------------------------------------------

def checkerboard() -> np.ndarray:
    xs, ys = np.meshgrid(np.arange(9) * 10.0, np.arange(7) * 10.0)
    return np.column_stack([xs.ravel() - 40.0, ys.ravel() - 30.0,
                            np.zeros(63)])


def synth_views(model: PinholeModel, n: int = 8, noise: float = 0.0,
                seed: int = 0):
    """Render checkerboard views from known poses; returns views and poses."""
    rng = np.random.default_rng(seed)
    board = checkerboard()
    views, poses = [], []
    tilts = np.linspace(-0.45, 0.45, n)
    for i in range(n):
        rv = np.array([tilts[i], tilts[::-1][i] * 0.8, 0.15 * rng.standard_normal()])
        t = np.array([rng.uniform(-8, 8), rng.uniform(-8, 8), rng.uniform(150, 220)])
        T = RigidTransform(quat_from_rotvec(rv), t)
        px = model.project(T.apply(board))
        px = px + noise * rng.standard_normal(px.shape)
        views.append(CalibrationView(board, px))
        poses.append(T)
    return views, poses


def test_intrinsics_noiseless_recovers_model():
    views, _ = synth_views(MODEL, n=8)
    res = calibrate_intrinsics(views, image_size=(512, 768))
    assert abs(res.model.fx - MODEL.fx) / MODEL.fx < 1e-3
    assert abs(res.model.fy - MODEL.fy) / MODEL.fy < 1e-3
    assert abs(res.model.cx - MODEL.cx) < 0.5
    assert abs(res.model.k1 - MODEL.k1) < 1e-3
    assert res.rms_px < 1e-6


def test_intrinsics_noise_floor():
    views, _ = synth_views(MODEL, n=12, noise=0.1, seed=3)
    res = calibrate_intrinsics(views, image_size=(512, 768))
    assert 0.05 < res.rms_px < 0.15


def test_intrinsics_two_views_degenerate():
    views, _ = synth_views(MODEL, n=8)
    with pytest.raises(DegenerateViews):
        calibrate_intrinsics(views[:2], image_size=(512, 768))


# ---------------------------------------------------------------------------
# corner transfer
# ---------------------------------------------------------------------------

def test_transfer_exact_under_global_homography():
    H = np.array([[0.8, 0.02, 30.0], [-0.01, 0.85, -12.0], [1e-5, 2e-5, 1.0]])
    rng = np.random.default_rng(2)
    cam = rng.uniform(0, 400, size=(500, 2))
    proj = apply_homography(H, cam)
    corners = rng.uniform(50, 350, size=(20, 2))
    res = transfer_points_to_projector(corners, cam, proj, radius=40.0)
    assert res.ok.all()
    np.testing.assert_allclose(res.proj_points, apply_homography(H, corners),
                               atol=1e-9)


def test_transfer_flags_sparse_corner():
    cam = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    proj = cam + 5.0
    res = transfer_points_to_projector([[0.5, 0.5]], cam, proj, radius=2.0)
    assert not res.ok[0]
    assert np.isnan(res.proj_points[0]).all()
    assert res.n_matches[0] == 3


# ---------------------------------------------------------------------------
# stereo calibration
# ---------------------------------------------------------------------------

PROJ = PinholeModel(fx=500.0, fy=520.0, cx=255.5, cy=383.5,
                    k1=-0.04, k2=0.005, k3=-0.0006,
                    image_w=512, image_h=768)
CAM_FROM_PROJ = RigidTransform(quat_from_rotvec([0.0, np.radians(29.0), 0.0]),
                               [-61.0, 0.0, 0.0])


def synth_stereo_views(n: int = 8, noise: float = 0.0, seed: int = 1):
    rng = np.random.default_rng(seed)
    board = checkerboard()
    cam_views, proj_views = [], []
    proj_from_cam = CAM_FROM_PROJ.inverse()
    tilts = np.linspace(-0.4, 0.4, n)
    for i in range(n):
        rv = np.array([tilts[i], 0.25 + tilts[::-1][i] * 0.6,
                       0.2 * rng.standard_normal()])
        t = np.array([rng.uniform(-5, 5) - 25.0, rng.uniform(-5, 5),
                      rng.uniform(160, 230)])
        T = RigidTransform(quat_from_rotvec(rv), t)    # camera_from_target
        cam_px = MODEL.project(T.apply(board))
        proj_px = PROJ.project(proj_from_cam.compose(T).apply(board))
        cam_px = cam_px + noise * rng.standard_normal(cam_px.shape)
        proj_px = proj_px + noise * rng.standard_normal(proj_px.shape)
        cam_views.append(CalibrationView(board, cam_px, paired=True))
        proj_views.append(CalibrationView(board, proj_px, paired=True))
    return cam_views, proj_views


def test_stereo_noiseless_recovers_rig():
    cam_views, proj_views = synth_stereo_views(n=8)
    res = calibrate_stereo(cam_views, proj_views,
                           cam_size=(512, 768), proj_size=(512, 768))
    assert abs(res.rig.stereo_angle_deg - 29.0) < 0.01
    np.testing.assert_allclose(res.rig.cam_from_proj.t, CAM_FROM_PROJ.t,
                               atol=0.01)
    assert res.rms_px < 1e-6


def test_stereo_angle_definition():
    rig = StereoRig(MODEL, PROJ, CAM_FROM_PROJ)
    assert abs(rig.stereo_angle_deg - 29.0) < 1e-12
    assert abs(rig.baseline_mm - 61.0) < 1e-12


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def test_pinhole_save_load_round_trip(tmp_path):
    p = tmp_path / "cam.txt"
    save_pinhole(p, MODEL)
    m = load_pinhole(p)
    assert m == MODEL


def test_rig_save_load_round_trip(tmp_path):
    rig = StereoRig(MODEL, PROJ, CAM_FROM_PROJ)
    p = tmp_path / "rig.txt"
    save_rig(p, rig)
    r = load_rig(p)
    assert r.camera == rig.camera and r.projector == rig.projector
    np.testing.assert_allclose(r.cam_from_proj.q, rig.cam_from_proj.q,
                               atol=1e-16)
    np.testing.assert_allclose(r.cam_from_proj.t, rig.cam_from_proj.t,
                               atol=1e-16)
