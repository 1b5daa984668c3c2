"""Synthetic capture generation for parametric pipe scenes.

Scenes are analytic (planes and cylinders with smooth radial defect bumps),
so every rendered pixel has an exact closed-form or Newton-refined ground
truth.  The renderer casts one ray per camera pixel, intersects the scene,
re-projects the hit into the projector and samples the projected pattern as
a field of Gaussian blobs; a texture pass samples a procedural albedo
instead.  A six-module rig whose camera pupils all sit on the carrier axis
emulates the capture geometry, and a drive simulator emits ordered captures
with ground-truth and noise-accumulating odometry poses.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .calib import PinholeModel, StereoRig
from .geometry import RigidTransform, axis_angle_quat, quat_from_rotvec

BACKGROUND = 0.15       # background intensity of pattern images
SPOT_PEAK = 0.75        # blob amplitude above background
DEFAULT_SPOT_SIGMA = 0.8   # px


class NoIntersection(ValueError):
    """No scene surface along any requested ray."""


# ---------------------------------------------------------------------------
# procedural albedo
# ---------------------------------------------------------------------------

def _hash01(ix: np.ndarray, iy: np.ndarray, seed: int) -> np.ndarray:
    """Deterministic integer-lattice hash onto [0, 1)."""
    h = (ix.astype(np.uint64) * np.uint64(0x9E3779B97F4A7C15)
         + iy.astype(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)
         + np.uint64(seed) * np.uint64(0xD6E8FEB86659FD93))
    h ^= h >> np.uint64(33)
    h *= np.uint64(0xFF51AFD7ED558CCD)
    h ^= h >> np.uint64(33)
    return (h >> np.uint64(40)).astype(np.float64) / float(1 << 24)


def _value_noise(u: np.ndarray, v: np.ndarray, seed: int) -> np.ndarray:
    """Bilinear value noise over the unit lattice."""
    iu, iv = np.floor(u), np.floor(v)
    fu, fv = u - iu, v - iv
    fu = fu * fu * (3.0 - 2.0 * fu)
    fv = fv * fv * (3.0 - 2.0 * fv)
    i, j = iu.astype(np.int64), iv.astype(np.int64)
    n00 = _hash01(i, j, seed)
    n10 = _hash01(i + 1, j, seed)
    n01 = _hash01(i, j + 1, seed)
    n11 = _hash01(i + 1, j + 1, seed)
    return (n00 * (1 - fu) * (1 - fv) + n10 * fu * (1 - fv)
            + n01 * (1 - fu) * fv + n11 * fu * fv)


@dataclass(frozen=True)
class Albedo:
    """Procedural speckle albedo over surface coordinates in mm.

    ``contrast = 0`` yields a constant albedo of ``base``.
    """

    base: float = 0.5
    contrast: float = 0.35
    scale_mm: float = 2.0
    seed: int = 0

    def sample(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        if self.contrast == 0.0:
            return np.full(np.shape(u), self.base)
        s = self.scale_mm
        n = (_value_noise(u / s, v / s, self.seed)
             + 0.5 * _value_noise(u / (0.37 * s), v / (0.37 * s), self.seed + 1))
        return self.base + self.contrast * (n / 1.5 - 0.5) * 2.0


# ---------------------------------------------------------------------------
# scenes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Defect:
    """Smooth radial indentation of the pipe wall (cosine-squared bump).

    Positive ``depth_mm`` increases the local radius of the inner wall.
    ``center`` is (azimuth rad, axial mm); line defects run between
    ``center`` and ``end`` in the unrolled (arc length, z) plane.
    """

    center: tuple                 # (phi, z)
    depth_mm: float = 1.5
    footprint_mm: float = 10.0
    end: tuple = None             # set for line defects

    def bump(self, radius: float, phi: np.ndarray, z: np.ndarray) -> np.ndarray:
        dphi = np.angle(np.exp(1j * (phi - self.center[0])))
        du = radius * dphi
        if self.end is None:
            dv = z - self.center[1]
        else:
            dphi2 = np.angle(np.exp(1j * (self.end[0] - self.center[0])))
            seg = np.array([radius * dphi2, self.end[1] - self.center[1]])
            seg_len = np.linalg.norm(seg)
            tang = seg / max(seg_len, 1e-12)
            pu = du * tang[0] + (z - self.center[1]) * tang[1]
            pu_c = np.clip(pu, 0.0, seg_len)
            du = du - pu_c * tang[0]
            dv = (z - self.center[1]) - pu_c * tang[1]
        r = np.sqrt(du * du + dv * dv) / self.footprint_mm
        prof = np.where(r < 1.0, np.cos(0.5 * np.pi * np.minimum(r, 1.0)) ** 2, 0.0)
        return self.depth_mm * prof


@dataclass(frozen=True)
class PlaneScene:
    """Infinite plane: ``dot(p - point, normal) = 0``, world frame."""

    point: tuple
    normal: tuple
    albedo: Albedo = field(default_factory=Albedo)

    def basis(self):
        n = np.asarray(self.normal, dtype=float)
        n = n / np.linalg.norm(n)
        a = np.array([1.0, 0.0, 0.0])
        if abs(n[0]) > 0.9:
            a = np.array([0.0, 1.0, 0.0])
        u = np.cross(n, a)
        u /= np.linalg.norm(u)
        return u, np.cross(n, u), n

    def intersect(self, origins: np.ndarray, dirs: np.ndarray):
        n = np.asarray(self.normal, dtype=float)
        n = n / np.linalg.norm(n)
        p0 = np.asarray(self.point, dtype=float)
        den = dirs @ n
        num = (p0 - origins) @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            t = num / den
        valid = (np.abs(den) > 1e-12) & (t > 1e-9) & np.isfinite(t)
        return t, valid

    def surface_uv(self, pts: np.ndarray):
        u, v, _ = self.basis()
        rel = pts - np.asarray(self.point, dtype=float)
        return rel @ u, rel @ v

    def sample_albedo(self, pts: np.ndarray) -> np.ndarray:
        uu, vv = self.surface_uv(pts)
        return self.albedo.sample(uu, vv)


def plane_facing(world_from_cam: RigidTransform, distance_mm: float,
                 albedo: Albedo = None) -> PlaneScene:
    """Plane perpendicular to the camera principal axis at the given range."""
    z = world_from_cam.R @ np.array([0.0, 0.0, 1.0])
    p = world_from_cam.t + distance_mm * z
    return PlaneScene(tuple(p), tuple(-z), albedo or Albedo())


@dataclass(frozen=True)
class CylinderScene:
    """Pipe wall: circular cylinder (viewed from inside) with defects."""

    axis_point: tuple = (0.0, 0.0, 0.0)
    axis_dir: tuple = (0.0, 0.0, 1.0)
    diameter_mm: float = 200.0
    defects: tuple = ()
    albedo: Albedo = field(default_factory=Albedo)

    @property
    def radius(self) -> float:
        return 0.5 * self.diameter_mm

    def frame(self):
        d = np.asarray(self.axis_dir, dtype=float)
        d = d / np.linalg.norm(d)
        up = np.array([0.0, 1.0, 0.0])
        if abs(d @ up) > 0.9:
            up = np.array([1.0, 0.0, 0.0])
        e1 = up - (up @ d) * d
        e1 /= np.linalg.norm(e1)
        return e1, np.cross(d, e1), d

    def cylindrical(self, pts: np.ndarray):
        e1, e2, d = self.frame()
        rel = pts - np.asarray(self.axis_point, dtype=float)
        z = rel @ d
        x, y = rel @ e1, rel @ e2
        return np.sqrt(x * x + y * y), np.arctan2(y, x) % (2 * np.pi), z

    def local_radius(self, phi: np.ndarray, z: np.ndarray) -> np.ndarray:
        r = np.full(np.shape(phi), self.radius, dtype=float)
        for dft in self.defects:
            r = r + dft.bump(self.radius, phi, z)
        return r

    def intersect(self, origins: np.ndarray, dirs: np.ndarray,
                  newton_iters: int = 10):
        e1, e2, d = self.frame()
        a0 = np.asarray(self.axis_point, dtype=float)
        # base cylinder: quadratic in t on the axis-perpendicular components
        ro = origins - a0
        op = ro - np.outer(ro @ d, d)
        dp = dirs - np.outer(dirs @ d, d)
        A = np.sum(dp * dp, axis=1)
        B = 2.0 * np.sum(op * dp, axis=1)
        C = np.sum(op * op, axis=1) - self.radius ** 2
        disc = B * B - 4 * A * C
        valid = (disc >= 0) & (A > 1e-14)
        sq = np.sqrt(np.maximum(disc, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (-B - sq) / (2 * A)
            t2 = (-B + sq) / (2 * A)
        # from inside the pipe the near positive root is the visible wall
        t = np.where(t1 > 1e-9, t1, t2)
        valid &= t > 1e-9
        if self.defects:
            t = t.copy()
            for _ in range(newton_iters):
                pts = origins + t[:, None] * dirs
                rho, phi, z = self.cylindrical(pts)
                f = rho - self.local_radius(phi, z)
                h = 1e-6
                pts2 = origins + (t + h)[:, None] * dirs
                rho2, phi2, z2 = self.cylindrical(pts2)
                f2 = rho2 - self.local_radius(phi2, z2)
                df = (f2 - f) / h
                step = np.where(valid & (np.abs(df) > 1e-12), f / df, 0.0)
                t = t - np.clip(step, -5.0, 5.0)
            pts = origins + t[:, None] * dirs
            rho, phi, z = self.cylindrical(pts)
            valid &= np.abs(rho - self.local_radius(phi, z)) < 1e-6
            valid &= t > 1e-9
        return t, valid

    def surface_uv(self, pts: np.ndarray):
        _, phi, z = self.cylindrical(pts)
        return self.radius * phi, z

    def sample_albedo(self, pts: np.ndarray) -> np.ndarray:
        uu, vv = self.surface_uv(pts)
        return self.albedo.sample(uu, vv)


# ---------------------------------------------------------------------------
# pattern-as-light-field sampling
# ---------------------------------------------------------------------------

def _cell_pitch(cell_px) -> tuple:
    """(row pitch, col pitch) in projector px from a scalar or pair."""
    try:
        return float(cell_px[0]), float(cell_px[1])
    except TypeError:
        return float(cell_px), float(cell_px)


def pattern_blob_field(proj_px: np.ndarray, pattern_bits: np.ndarray,
                       cell_px, proj_size: tuple,
                       sigma_px: float = DEFAULT_SPOT_SIGMA) -> np.ndarray:
    """Intensity in [0, 1] of the tiled projected spot pattern.

    Spots sit at the centers of an integer cell grid (``cell_px`` pixels per
    cell, a scalar or a (row pitch, col pitch) pair); the finite pattern
    tile repeats in both directions to fill the projector, and cells outside
    the projector image emit nothing.
    """
    p = np.asarray(proj_px, dtype=float)
    ph, pw = pattern_bits.shape
    ch, cw = _cell_pitch(cell_px)
    pj = p[..., 0] / cw - 0.5
    pi = p[..., 1] / ch - 0.5
    j0 = np.floor(pj).astype(np.int64)
    i0 = np.floor(pi).astype(np.int64)
    n_cols = int(np.ceil(proj_size[0] / cw))
    n_rows = int(np.ceil(proj_size[1] / ch))
    acc = np.zeros(p.shape[:-1])
    inv2s2 = 1.0 / (2.0 * sigma_px * sigma_px)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            ci = i0 + di
            cj = j0 + dj
            inside = (ci >= 0) & (ci < n_rows) & (cj >= 0) & (cj < n_cols)
            on = pattern_bits[np.mod(ci, ph), np.mod(cj, pw)].astype(bool) & inside
            cx = (cj + 0.5) * cw
            cy = (ci + 0.5) * ch
            d2 = (p[..., 0] - cx) ** 2 + (p[..., 1] - cy) ** 2
            acc = acc + np.where(on, np.exp(-d2 * inv2s2), 0.0)
    return np.clip(acc, 0.0, 1.0)


def spot_centers(pattern_bits: np.ndarray, cell_px,
                 proj_size: tuple) -> tuple:
    """Projector-pixel centers of every ON spot of the tiled pattern.

    Returns (centers (N, 2), cell_rows (N,), cell_cols (N,)) where the cell
    indices refer to the tiled grid (row i, col j), with the pattern tile
    repeating every ``pattern_bits.shape`` cells.
    """
    ph, pw = pattern_bits.shape
    ch, cw = _cell_pitch(cell_px)
    n_cols = int(np.ceil(proj_size[0] / cw))
    n_rows = int(np.ceil(proj_size[1] / ch))
    ii, jj = np.meshgrid(np.arange(n_rows), np.arange(n_cols), indexing="ij")
    on = pattern_bits[ii % ph, jj % pw].astype(bool)
    ii, jj = ii[on], jj[on]
    centers = np.column_stack([(jj + 0.5) * cw, (ii + 0.5) * ch])
    return centers, ii, jj


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------

def _camera_rays(camera: PinholeModel, world_from_cam: RigidTransform):
    xs, ys = np.meshgrid(np.arange(camera.image_w, dtype=float),
                         np.arange(camera.image_h, dtype=float))
    px = np.column_stack([xs.ravel(), ys.ravel()])
    dirs_cam = camera.pixel_rays(px)
    dirs = dirs_cam @ world_from_cam.R.T
    origins = np.broadcast_to(world_from_cam.t, dirs.shape)
    return origins, dirs


def render_depth(scene, camera: PinholeModel,
                 world_from_cam: RigidTransform = None) -> np.ndarray:
    """Exact per-pixel ray-hit range (mm); NaN where no surface is hit."""
    world_from_cam = world_from_cam or RigidTransform.identity()
    origins, dirs = _camera_rays(camera, world_from_cam)
    t, valid = scene.intersect(origins, dirs)
    depth = np.where(valid, t, np.nan)
    return depth.reshape(camera.image_h, camera.image_w).astype(np.float32)


def render_pattern_view(scene, rig: StereoRig, pattern_bits: np.ndarray,
                        cell_px, world_from_cam: RigidTransform = None,
                        sigma_px: float = DEFAULT_SPOT_SIGMA,
                        noise_sigma: float = 0.0,
                        illumination_gradient: float = 0.0,
                        rng: np.random.Generator = None):
    """Render the projected pattern as seen by the camera.

    Returns (image float32 (h, w) in [0, 1], depth float32 (h, w) mm).
    ``illumination_gradient`` g scales intensity linearly from 1 to 1/(1+g)
    across image columns (g = 1 gives the 2:1 gradient used in tests).
    """
    world_from_cam = world_from_cam or RigidTransform.identity()
    cam = rig.camera
    origins, dirs = _camera_rays(cam, world_from_cam)
    t, valid = scene.intersect(origins, dirs)
    hits = origins + t[:, None] * dirs
    proj_from_world = world_from_cam.compose(rig.cam_from_proj).inverse()
    p_proj = proj_from_world.apply(hits)
    front = valid & (p_proj[:, 2] > 1e-9)
    proj_px = np.zeros((len(t), 2))
    proj_px[front] = rig.projector.project(p_proj[front])
    lit = np.zeros(len(t))
    lit[front] = pattern_blob_field(proj_px[front], pattern_bits, cell_px,
                                    (rig.projector.image_w, rig.projector.image_h),
                                    sigma_px)
    img = BACKGROUND + SPOT_PEAK * lit
    img[~valid] = 0.0
    img = img.reshape(cam.image_h, cam.image_w)
    if illumination_gradient:
        ramp = 1.0 / (1.0 + illumination_gradient
                      * np.arange(cam.image_w) / max(cam.image_w - 1, 1))
        img = img * ramp[None, :]
    if noise_sigma:
        rng = rng or np.random.default_rng(0)
        img = img + rng.normal(scale=noise_sigma, size=img.shape)
    depth = np.where(valid, t, np.nan).reshape(cam.image_h, cam.image_w)
    return img.astype(np.float32), depth.astype(np.float32)


def render_texture_view(scene, camera: PinholeModel,
                        world_from_cam: RigidTransform = None,
                        noise_sigma: float = 0.0,
                        rng: np.random.Generator = None) -> np.ndarray:
    """Render the scene albedo (Lambert with constant light)."""
    world_from_cam = world_from_cam or RigidTransform.identity()
    origins, dirs = _camera_rays(camera, world_from_cam)
    t, valid = scene.intersect(origins, dirs)
    hits = origins + np.where(valid, t, 1.0)[:, None] * dirs
    img = np.where(valid, scene.sample_albedo(hits), 0.0)
    img = img.reshape(camera.image_h, camera.image_w)
    if noise_sigma:
        rng = rng or np.random.default_rng(0)
        img = img + rng.normal(scale=noise_sigma, size=img.shape)
    return img.astype(np.float32)


def oracle_correspondences(scene, rig: StereoRig, pattern_bits: np.ndarray,
                           cell_px,
                           world_from_cam: RigidTransform = None):
    """Exact camera-pixel position of every visible projected spot.

    Casts a projector ray through each ON spot center, intersects the scene
    and re-projects into the camera.  Returns a dict with ``cam_px``,
    ``proj_px``, ``cell_rc`` (tiled cell indices), ``points_cam`` (3D in the
    camera frame) and ``range_mm``.
    """
    world_from_cam = world_from_cam or RigidTransform.identity()
    centers, ci, cj = spot_centers(pattern_bits, cell_px,
                                   (rig.projector.image_w, rig.projector.image_h))
    world_from_proj = world_from_cam.compose(rig.cam_from_proj)
    dirs_p = rig.projector.pixel_rays(centers)
    dirs = dirs_p @ world_from_proj.R.T
    origins = np.broadcast_to(world_from_proj.t, dirs.shape)
    t, valid = scene.intersect(origins, dirs)
    hits = origins + t[:, None] * dirs
    cam_from_world = world_from_cam.inverse()
    p_cam = cam_from_world.apply(hits)
    valid &= p_cam[:, 2] > 1e-9
    cam_px = np.zeros((len(t), 2))
    cam_px[valid] = rig.camera.project(p_cam[valid])
    valid &= rig.camera.contains(cam_px)
    return {
        "cam_px": cam_px[valid],
        "proj_px": centers[valid],
        "cell_rc": np.column_stack([ci[valid], cj[valid]]),
        "points_cam": p_cam[valid],
        "range_mm": np.linalg.norm(p_cam[valid], axis=1),
    }


# ---------------------------------------------------------------------------
# six-module rig on a carrier
# ---------------------------------------------------------------------------

@dataclass
class ModuleMount:
    """One measurement module and its mounting pose on the carrier.

    ``carrier_from_cam`` maps camera-frame points into the carrier frame
    (carrier axis = +z); the camera pupil must sit on that axis.
    """

    rig: StereoRig
    carrier_from_cam: RigidTransform


@dataclass
class RigConfig:
    modules: list
    fov_deg: tuple = (76.0, 61.0)   # (vertical, horizontal)
    carrier_diameter_mm: float = 150.0

    def validate(self):
        for m in self.modules:
            p = m.carrier_from_cam.t
            if np.hypot(p[0], p[1]) > 1e-9:
                raise ValueError("camera pupil not on the carrier axis")
        return self

    def coverage_intervals(self) -> list:
        """Circumferential angular interval (lo, hi) rad for each module.

        With pupils on the axis the wall azimuth footprint equals the
        horizontal frustum interval, independent of pipe diameter.
        """
        out = []
        for m in self.modules:
            cam = m.rig.camera
            edges = cam.unproject(np.array([[0.0, cam.cy],
                                            [cam.image_w - 1.0, cam.cy]]))
            half = [np.arctan(e[0]) for e in edges]
            z = m.carrier_from_cam.R @ np.array([0.0, 0.0, 1.0])
            x = m.carrier_from_cam.R @ np.array([1.0, 0.0, 0.0])
            theta = np.arctan2(z[1], z[0])
            # camera +x maps to increasing azimuth when x is the tangent dir
            sgn = np.sign(x @ np.array([-np.sin(theta), np.cos(theta), 0.0]))
            out.append((theta + sgn * half[0], theta + sgn * half[1]))
        return [(min(a, b), max(a, b)) for a, b in out]


def default_stereo_rig(scale: float = 1.0) -> StereoRig:
    """Camera/projector pair: 61 x 76 deg FOV, 29 deg stereo angle."""
    w, h = int(round(512 * scale)), int(round(768 * scale))
    fx = (w / 2.0) / np.tan(np.radians(61.0 / 2.0))
    fy = (h / 2.0) / np.tan(np.radians(76.0 / 2.0))
    cam = PinholeModel(fx=fx, fy=fy, cx=(w - 1) / 2.0, cy=(h - 1) / 2.0,
                       k1=-0.05, k2=0.006, k3=-0.0008, image_w=w, image_h=h)
    pfx = (w / 2.0) / np.tan(np.radians(50.0 / 2.0))
    pfy = (h / 2.0) / np.tan(np.radians(66.0 / 2.0))
    proj = PinholeModel(fx=pfx, fy=pfy, cx=(w - 1) / 2.0, cy=(h - 1) / 2.0,
                        k1=-0.04, k2=0.005, k3=-0.0006, image_w=w, image_h=h)
    cam_from_proj = RigidTransform(
        axis_angle_quat([0.0, 1.0, 0.0], np.radians(29.0)), [-61.0, 0.0, 0.0])
    return StereoRig(cam, proj, cam_from_proj)


def default_rig_config(scale: float = 1.0, axial_stagger_mm: float = 60.0) -> RigConfig:
    """Six modules at 60 deg steps; camera x tangential, y axial, z radial."""
    modules = []
    for i in range(6):
        theta = np.radians(60.0 * i)
        r_hat = np.array([np.cos(theta), np.sin(theta), 0.0])
        t_hat = np.array([-np.sin(theta), np.cos(theta), 0.0])
        z_hat = np.array([0.0, 0.0, 1.0])
        R = np.column_stack([t_hat, z_hat, r_hat])
        mount = RigidTransform.from_matrix(
            np.block([[R, np.array([[0.0], [0.0], [i * axial_stagger_mm]])],
                      [np.zeros((1, 3)), np.ones((1, 1))]]))
        modules.append(ModuleMount(default_stereo_rig(scale), mount))
    return RigConfig(modules).validate()


# ---------------------------------------------------------------------------
# drive simulation
# ---------------------------------------------------------------------------

@dataclass
class SegmentCapture:
    """One module's output at one acquisition step."""

    module_id: int                  # 1..6
    acq: int                        # acquisition index along the drive
    texture: np.ndarray             # (h, w) float32
    depth: np.ndarray               # (h, w) float32 range mm, NaN invalid
    camera: PinholeModel
    odom_pose: RigidTransform       # world_from_camera, odometry estimate
    gt_pose: RigidTransform         # world_from_camera, simulator truth

    @property
    def valid_mask(self) -> np.ndarray:
        return np.isfinite(self.depth)


def simulate_drive(scene, config: RigConfig, step_mm: float, n_steps: int,
                   odom_sigma_t_mm: float = 0.0,
                   odom_sigma_r_deg: float = 0.0,
                   odom_yaw_bias_deg: float = 0.0,
                   rng: np.random.Generator = None,
                   modules: list = None,
                   texture_noise: float = 0.0) -> list:
    """Drive the carrier along +z; emit captures ordered by (module, step).

    Odometry = ground truth composed with an accumulating SE(3) random walk
    (per-step sigmas) plus an optional systematic per-step yaw bias about
    the carrier +y axis.
    """
    if step_mm <= 0:
        raise ValueError("step_mm must be positive")
    rng = rng or np.random.default_rng(0)
    modules = modules if modules is not None else list(range(1, len(config.modules) + 1))
    drift = RigidTransform.identity()
    captures = []
    for j in range(n_steps):
        carrier = RigidTransform(t=[0.0, 0.0, j * step_mm])
        if j > 0:
            rv = np.radians(odom_sigma_r_deg) * rng.standard_normal(3) \
                + np.radians(odom_yaw_bias_deg) * np.array([0.0, 1.0, 0.0])
            dt = odom_sigma_t_mm * rng.standard_normal(3)
            drift = drift.compose(RigidTransform(quat_from_rotvec(rv), dt))
        for i in modules:
            mount = config.modules[i - 1]
            gt = carrier.compose(mount.carrier_from_cam)
            odom = carrier.compose(drift).compose(mount.carrier_from_cam)
            cam = mount.rig.camera
            tex = render_texture_view(scene, cam, gt, noise_sigma=texture_noise,
                                      rng=rng)
            depth = render_depth(scene, cam, gt)
            captures.append(SegmentCapture(i, j, tex, depth, cam, odom, gt))
    return captures
