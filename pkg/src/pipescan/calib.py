"""Camera and projector models plus planar-target calibration.

The imaging model is a pinhole with a three-term radial distortion
polynomial applied in normalized (unit-focal) image coordinates:

    p_d = p_u * (1 + k1*r^2 + k2*r^4 + k3*r^6),   r^2 = x_u^2 + y_u^2

The principal point doubles as the distortion center.  Calibration uses
views of a planar target (``z = 0`` in target coordinates): per-view
homographies give a closed-form initialization of the intrinsics, which a
Levenberg-Marquardt refinement then polishes jointly with the distortion
coefficients and per-view poses.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .geometry import (
    RigidTransform,
    matrix_to_quat,
    quat_from_rotvec,
    quat_normalize,
    quat_to_rotvec,
)


class NoConvergence(RuntimeError):
    """Iterative undistortion failed to reach the requested tolerance."""


class DegenerateViews(ValueError):
    """Calibration views under-constrain the model (too few / near-parallel)."""


class InsufficientMatches(ValueError):
    """Too few decoded matches near a corner to fit a local homography."""


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PinholeModel:
    """Pinhole intrinsics with radial distortion; units are pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    image_w: int = 0
    image_h: int = 0

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.image_w and not (0 <= self.cx < self.image_w):
            raise ValueError("cx outside image")
        if self.image_h and not (0 <= self.cy < self.image_h):
            raise ValueError("cy outside image")

    # -- distortion ---------------------------------------------------------
    def distort(self, p_norm) -> np.ndarray:
        """Apply radial distortion to normalized points (..., 2)."""
        p = np.asarray(p_norm, dtype=float)
        r2 = np.sum(p * p, axis=-1, keepdims=True)
        f = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3))
        return p * f

    def undistort(self, p_dist, tol: float = 1e-12, max_iter: int = 60) -> np.ndarray:
        """Invert :meth:`distort` by fixed-point iteration."""
        pd = np.asarray(p_dist, dtype=float)
        x = pd.copy()
        for _ in range(max_iter):
            r2 = np.sum(x * x, axis=-1, keepdims=True)
            f = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3))
            x = pd / f
            err = np.max(np.abs(self.distort(x) - pd)) if x.size else 0.0
            if err < tol:
                return x
        raise NoConvergence(f"undistort did not reach tol={tol} in {max_iter} iterations")

    # -- projection ---------------------------------------------------------
    def project(self, pts_cam) -> np.ndarray:
        """Project camera-frame 3D points (..., 3) to distorted pixels (..., 2).

        No visibility handling: the caller filters points with z <= 0.
        """
        pts = np.asarray(pts_cam, dtype=float)
        n = pts[..., :2] / pts[..., 2:3]
        d = self.distort(n)
        return d * np.array([self.fx, self.fy]) + np.array([self.cx, self.cy])

    def unproject(self, px, tol: float = 1e-12, max_iter: int = 60) -> np.ndarray:
        """Pixels (..., 2) to undistorted normalized coordinates (..., 2)."""
        p = np.asarray(px, dtype=float)
        nd = (p - np.array([self.cx, self.cy])) / np.array([self.fx, self.fy])
        return self.undistort(nd, tol=tol, max_iter=max_iter)

    def pixel_rays(self, px) -> np.ndarray:
        """Unit direction vectors in the camera frame for pixels (..., 2)."""
        n = self.unproject(px)
        v = np.concatenate([n, np.ones(n.shape[:-1] + (1,))], axis=-1)
        return v / np.linalg.norm(v, axis=-1, keepdims=True)

    def contains(self, px) -> np.ndarray:
        """Boolean mask: pixel coordinates inside the image rectangle."""
        p = np.asarray(px, dtype=float)
        return ((p[..., 0] >= 0) & (p[..., 0] <= self.image_w - 1)
                & (p[..., 1] >= 0) & (p[..., 1] <= self.image_h - 1))


@dataclass
class CalibrationView:
    """Planar-target observations: world points (z = 0) and their pixels."""

    world_points: np.ndarray
    image_points: np.ndarray
    paired: bool = False

    def __post_init__(self):
        self.world_points = np.asarray(self.world_points, dtype=float).reshape(-1, 3)
        self.image_points = np.asarray(self.image_points, dtype=float).reshape(-1, 2)
        if len(self.world_points) != len(self.image_points):
            raise ValueError("world/image point counts differ")
        if len(self.world_points) < 4:
            raise ValueError("need at least 4 points per view")


@dataclass
class StereoRig:
    """Calibrated camera + projector pair.

    ``cam_from_proj`` maps projector-frame points into the camera frame.
    """

    camera: PinholeModel
    projector: PinholeModel
    cam_from_proj: RigidTransform

    def __post_init__(self):
        if np.linalg.norm(self.cam_from_proj.t) <= 0:
            raise ValueError("baseline must be non-zero")

    @property
    def baseline_mm(self) -> float:
        return float(np.linalg.norm(self.cam_from_proj.t))

    @property
    def stereo_angle_deg(self) -> float:
        """Angle between the camera and projector principal rays."""
        z_proj_in_cam = self.cam_from_proj.R @ np.array([0.0, 0.0, 1.0])
        c = np.clip(z_proj_in_cam[2], -1.0, 1.0)
        return float(np.degrees(np.arccos(c)))


# ---------------------------------------------------------------------------
# homographies
# ---------------------------------------------------------------------------

def _normalization(pts: np.ndarray) -> np.ndarray:
    """Hartley similarity normalization matrix for 2D points."""
    c = pts.mean(axis=0)
    d = np.linalg.norm(pts - c, axis=1).mean()
    s = np.sqrt(2.0) / max(d, 1e-12)
    return np.array([[s, 0.0, -s * c[0]],
                     [0.0, s, -s * c[1]],
                     [0.0, 0.0, 1.0]])


def fit_homography(src, dst) -> np.ndarray:
    """DLT homography mapping src (N, 2) onto dst (N, 2), N >= 4."""
    src = np.asarray(src, dtype=float).reshape(-1, 2)
    dst = np.asarray(dst, dtype=float).reshape(-1, 2)
    n = len(src)
    if n < 4:
        raise InsufficientMatches(f"homography needs >= 4 correspondences, got {n}")
    Ts, Td = _normalization(src), _normalization(dst)
    sh = np.column_stack([src, np.ones(n)]) @ Ts.T
    dh = np.column_stack([dst, np.ones(n)]) @ Td.T
    A = np.zeros((2 * n, 9))
    A[0::2, 0:3] = -sh
    A[0::2, 6:9] = sh * dh[:, 0:1]
    A[1::2, 3:6] = -sh
    A[1::2, 6:9] = sh * dh[:, 1:2]
    _, s, vt = np.linalg.svd(A)
    if s[-2] < 1e-12 * s[0]:
        raise InsufficientMatches("degenerate correspondence configuration")
    Hn = vt[-1].reshape(3, 3)
    H = np.linalg.inv(Td) @ Hn @ Ts
    return H / H[2, 2]


def apply_homography(H, pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    ph = np.concatenate([pts, np.ones(pts.shape[:-1] + (1,))], axis=-1) @ H.T
    return ph[..., :2] / ph[..., 2:3]


# ---------------------------------------------------------------------------
# intrinsic calibration (planar-target method)
# ---------------------------------------------------------------------------

def _vij(H: np.ndarray, i: int, j: int) -> np.ndarray:
    h_i, h_j = H[:, i], H[:, j]
    return np.array([
        h_i[0] * h_j[0],
        h_i[0] * h_j[1] + h_i[1] * h_j[0],
        h_i[1] * h_j[1],
        h_i[2] * h_j[0] + h_i[0] * h_j[2],
        h_i[2] * h_j[1] + h_i[1] * h_j[2],
        h_i[2] * h_j[2],
    ])


def _intrinsics_from_homographies(Hs: list) -> tuple:
    rows = []
    for H in Hs:
        rows.append(_vij(H, 0, 1))
        rows.append(_vij(H, 0, 0) - _vij(H, 1, 1))
    # zero-skew prior keeps the 6-parameter conic solvable from 3 views
    rows.append(np.array([0.0, 1.0, 0.0, 0.0, 0.0, 0.0]))
    V = np.vstack(rows)
    _, s, vt = np.linalg.svd(V)
    if s[-2] < 1e-9 * s[0]:
        # a one-dimensional family of conics fits: views under-constrain
        raise DegenerateViews("calibration views do not constrain the intrinsics")
    b11, b12, b22, b13, b23, b33 = vt[-1]
    den = b11 * b22 - b12 * b12
    v0 = (b12 * b13 - b11 * b23) / den
    lam = b33 - (b13 * b13 + v0 * (b12 * b13 - b11 * b23)) / b11
    if lam / b11 <= 0 or lam * b11 / den <= 0:
        raise DegenerateViews("homographies imply a non-physical camera")
    alpha = np.sqrt(lam / b11)
    beta = np.sqrt(lam * b11 / den)
    u0 = -b13 * alpha * alpha / lam
    return alpha, beta, u0, v0


def _pose_from_homography(K: np.ndarray, H: np.ndarray) -> RigidTransform:
    M = np.linalg.solve(K, H)
    lam = 1.0 / np.linalg.norm(M[:, 0])
    if M[2, 2] * lam < 0:
        lam = -lam
    r1, r2, t = lam * M[:, 0], lam * M[:, 1], lam * M[:, 2]
    R0 = np.column_stack([r1, r2, np.cross(r1, r2)])
    u, _, vt = np.linalg.svd(R0)
    R = u @ vt
    if np.linalg.det(R) < 0:
        u[:, -1] = -u[:, -1]
        R = u @ vt
    return RigidTransform(matrix_to_quat(R), t)


@dataclass
class IntrinsicsResult:
    """Fitted model, per-view poses (camera_from_target), and residuals."""

    model: PinholeModel
    view_poses: list
    per_point_errors: list      # per view: (N,) pixel error magnitudes
    rms_px: float


def _pack_pose(T: RigidTransform) -> np.ndarray:
    return np.concatenate([quat_to_rotvec(T.q), T.t])


def _unpack_pose(x: np.ndarray) -> RigidTransform:
    return RigidTransform(quat_from_rotvec(x[:3]), x[3:6])


def calibrate_intrinsics(views: list, image_size: tuple = (0, 0),
                         refine: bool = True) -> IntrinsicsResult:
    """Fit a :class:`PinholeModel` to planar-target views.

    Initialization: per-view DLT homographies -> closed-form intrinsics ->
    per-view poses.  Refinement: joint LM over intrinsics, distortion and
    poses, minimizing reprojection error.
    """
    if len(views) < 3:
        raise DegenerateViews(f"need >= 3 views, got {len(views)}")
    Hs = [fit_homography(v.world_points[:, :2], v.image_points) for v in views]
    fx, fy, cx, cy = _intrinsics_from_homographies(Hs)
    K = np.array([[fx, 0, cx], [0, fy, cy], [0, 0, 1.0]])
    poses = [_pose_from_homography(K, H) for H in Hs]

    w, h = image_size
    x0 = np.concatenate([[fx, fy, cx, cy, 0.0, 0.0, 0.0]]
                        + [_pack_pose(T) for T in poses])

    def unpack(x):
        model = PinholeModel(*x[:7], image_w=w, image_h=h)
        ps = [_unpack_pose(x[7 + 6 * i: 13 + 6 * i]) for i in range(len(views))]
        return model, ps

    def residuals(x):
        model, ps = unpack(x)
        out = []
        for v, T in zip(views, ps):
            pred = model.project(T.apply(v.world_points))
            out.append((pred - v.image_points).ravel())
        return np.concatenate(out)

    if refine:
        sol = least_squares(residuals, x0, method="lm", ftol=1e-12, xtol=1e-12,
                            gtol=1e-12, max_nfev=200 * (len(x0) + 1))
        x0 = sol.x
    model, poses = unpack(x0)
    per_point, sq = [], 0.0
    n_total = 0
    for v, T in zip(views, poses):
        err = np.linalg.norm(model.project(T.apply(v.world_points))
                             - v.image_points, axis=1)
        per_point.append(err)
        sq += float(np.sum(err ** 2))
        n_total += len(err)
    return IntrinsicsResult(model, poses, per_point, float(np.sqrt(sq / n_total)))


# ---------------------------------------------------------------------------
# corner transfer into the projector image
# ---------------------------------------------------------------------------

@dataclass
class TransferResult:
    """Per-corner projector positions; dropped corners carry NaN."""

    proj_points: np.ndarray     # (M, 2), NaN rows where ok is False
    ok: np.ndarray              # (M,) bool
    n_matches: np.ndarray       # (M,) int, matches inside the window


def transfer_points_to_projector(cam_corners, cam_px, proj_px,
                                 radius: float = 15.0,
                                 min_matches: int = 4) -> TransferResult:
    """Map sub-pixel camera corners into the projector image.

    For each corner a homography is fitted to the decoded (camera px ->
    projector px) matches within ``radius`` pixels and the corner is mapped
    through it.  Corners with fewer than ``min_matches`` neighbors are
    flagged instead of raising.
    """
    corners = np.asarray(cam_corners, dtype=float).reshape(-1, 2)
    cam_px = np.asarray(cam_px, dtype=float).reshape(-1, 2)
    proj_px = np.asarray(proj_px, dtype=float).reshape(-1, 2)
    m = len(corners)
    out = np.full((m, 2), np.nan)
    ok = np.zeros(m, dtype=bool)
    counts = np.zeros(m, dtype=int)
    for i, c in enumerate(corners):
        near = np.linalg.norm(cam_px - c, axis=1) <= radius
        counts[i] = int(near.sum())
        if counts[i] < min_matches:
            continue
        try:
            H = fit_homography(cam_px[near], proj_px[near])
        except InsufficientMatches:
            continue
        out[i] = apply_homography(H, c)
        ok[i] = True
    return TransferResult(out, ok, counts)


# ---------------------------------------------------------------------------
# stereo (camera + projector) calibration
# ---------------------------------------------------------------------------

@dataclass
class StereoResult:
    rig: StereoRig
    view_poses: list            # camera_from_target per view
    rms_px: float


def _average_quaternion(qs: list) -> np.ndarray:
    A = np.zeros((4, 4))
    for q in qs:
        q = np.asarray(q)
        if q[0] < 0:
            q = -q
        A += np.outer(q, q)
    w, v = np.linalg.eigh(A)
    return quat_normalize(v[:, -1])


def calibrate_stereo(cam_views: list, proj_views: list,
                     cam_size: tuple = (0, 0), proj_size: tuple = (0, 0),
                     refine: bool = True) -> StereoResult:
    """Joint camera + projector calibration from paired planar-target views."""
    if len(cam_views) != len(proj_views):
        raise DegenerateViews("camera/projector view lists must pair up")
    cam0 = calibrate_intrinsics(cam_views, cam_size, refine=False)
    proj0 = calibrate_intrinsics(proj_views, proj_size, refine=False)
    rels = [cp.compose(pp.inverse())
            for cp, pp in zip(cam0.view_poses, proj0.view_poses)]
    q = _average_quaternion([r.q for r in rels])
    t = np.mean([r.t for r in rels], axis=0)
    rel0 = RigidTransform(q, t)

    def pk(m: PinholeModel):
        return [m.fx, m.fy, m.cx, m.cy, m.k1, m.k2, m.k3]

    x0 = np.concatenate([pk(cam0.model), pk(proj0.model), _pack_pose(rel0)]
                        + [_pack_pose(T) for T in cam0.view_poses])
    nv = len(cam_views)

    def unpack(x):
        cam = PinholeModel(*x[0:7], image_w=cam_size[0], image_h=cam_size[1])
        proj = PinholeModel(*x[7:14], image_w=proj_size[0], image_h=proj_size[1])
        rel = _unpack_pose(x[14:20])
        ps = [_unpack_pose(x[20 + 6 * i: 26 + 6 * i]) for i in range(nv)]
        return cam, proj, rel, ps

    def residuals(x):
        cam, proj, rel, ps = unpack(x)
        proj_from_cam = rel.inverse()
        out = []
        for cv, pv, T in zip(cam_views, proj_views, ps):
            out.append((cam.project(T.apply(cv.world_points))
                        - cv.image_points).ravel())
            Tp = proj_from_cam.compose(T)
            out.append((proj.project(Tp.apply(pv.world_points))
                        - pv.image_points).ravel())
        return np.concatenate(out)

    if refine:
        sol = least_squares(residuals, x0, method="lm", ftol=1e-12, xtol=1e-12,
                            gtol=1e-12, max_nfev=300 * (len(x0) + 1))
        x0 = sol.x
    cam, proj, rel, ps = unpack(x0)
    r = residuals(x0).reshape(-1, 2)
    rms = float(np.sqrt(np.mean(np.sum(r * r, axis=1))))
    return StereoResult(StereoRig(cam, proj, rel), ps, rms)


# ---------------------------------------------------------------------------
# serialization: human-readable key-value text
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    return format(float(x), ".17g")


def pinhole_to_lines(m: PinholeModel, prefix: str = "") -> list:
    keys = ["fx", "fy", "cx", "cy", "k1", "k2", "k3"]
    lines = [f"{prefix}{k} {_fmt(getattr(m, k))}" for k in keys]
    lines.append(f"{prefix}image_w {m.image_w}")
    lines.append(f"{prefix}image_h {m.image_h}")
    return lines


def pinhole_from_dict(d: dict, prefix: str = "") -> PinholeModel:
    g = lambda k: d[prefix + k]
    return PinholeModel(
        fx=float(g("fx")), fy=float(g("fy")),
        cx=float(g("cx")), cy=float(g("cy")),
        k1=float(g("k1")), k2=float(g("k2")), k3=float(g("k3")),
        image_w=int(g("image_w")), image_h=int(g("image_h")),
    )


def _parse_kv(text: str) -> dict:
    d = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, val = line.partition(" ")
        d[key] = val.strip()
    return d


def save_rig(path, rig: StereoRig) -> None:
    lines = ["# stereo rig calibration"]
    lines += pinhole_to_lines(rig.camera, "camera.")
    lines += pinhole_to_lines(rig.projector, "projector.")
    q, t = rig.cam_from_proj.q, rig.cam_from_proj.t
    lines.append("rel_q " + " ".join(_fmt(v) for v in q))
    lines.append("rel_t " + " ".join(_fmt(v) for v in t))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_rig(path) -> StereoRig:
    with open(path) as f:
        d = _parse_kv(f.read())
    cam = pinhole_from_dict(d, "camera.")
    proj = pinhole_from_dict(d, "projector.")
    q = np.array([float(v) for v in d["rel_q"].split()])
    t = np.array([float(v) for v in d["rel_t"].split()])
    return StereoRig(cam, proj, RigidTransform(q, t))


def save_pinhole(path, m: PinholeModel) -> None:
    with open(path, "w") as f:
        f.write("\n".join(["# pinhole model"] + pinhole_to_lines(m)) + "\n")


def load_pinhole(path) -> PinholeModel:
    with open(path) as f:
        return pinhole_from_dict(_parse_kv(f.read()))
