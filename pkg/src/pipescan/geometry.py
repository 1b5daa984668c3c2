"""Quaternion and rigid-body transform utilities.

Quaternions are Hamilton convention, stored as (w, x, y, z) with unit norm.
A :class:`RigidTransform` maps points from its source frame into its target
frame via ``p_out = R(q) @ p_in + t``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n == 0.0:
        raise ValueError("zero quaternion")
    q = q / n
    return q


def quat_mul(a, b) -> np.ndarray:
    """Hamilton product a * b."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conj(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([w, -x, -y, -z])


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(R) -> np.ndarray:
    """Rotation matrix to unit quaternion (w >= 0)."""
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array([0.25 * s,
                      (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s,
                      (R[1, 0] - R[0, 1]) / s])
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(R[i, i] - R[j, j] - R[k, k] + 1.0) * 2.0
        q = np.empty(4)
        q[0] = (R[k, j] - R[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (R[j, i] + R[i, j]) / s
        q[1 + k] = (R[k, i] + R[i, k]) / s
    if q[0] < 0:
        q = -q
    return quat_normalize(q)


def quat_from_rotvec(v) -> np.ndarray:
    """Exponential map: rotation vector (radians) to quaternion."""
    v = np.asarray(v, dtype=float)
    angle = np.linalg.norm(v)
    if angle < 1e-300:
        return quat_identity()
    axis = v / angle
    return np.concatenate([[np.cos(angle / 2.0)], np.sin(angle / 2.0) * axis])


def quat_to_rotvec(q) -> np.ndarray:
    """Logarithm map: quaternion to rotation vector (radians)."""
    q = np.asarray(q, dtype=float)
    if q[0] < 0:
        q = -q
    w = min(q[0], 1.0)
    vec = q[1:]
    n = np.linalg.norm(vec)
    if n < 1e-300:
        return np.zeros(3)
    angle = 2.0 * np.arctan2(n, w)
    return vec * (angle / n)


def quat_rotate(q, pts) -> np.ndarray:
    """Rotate point(s) (..., 3) by quaternion q."""
    pts = np.asarray(pts, dtype=float)
    return pts @ quat_to_matrix(q).T


def skew(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def axis_angle_quat(axis, angle_rad: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return quat_from_rotvec(axis * angle_rad)


@dataclass
class RigidTransform:
    """SE(3) element: rotation quaternion (w,x,y,z) and translation (mm)."""

    q: np.ndarray = field(default_factory=quat_identity)
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.q = quat_normalize(np.asarray(self.q, dtype=float))
        self.t = np.asarray(self.t, dtype=float).reshape(3).copy()

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_matrix(cls, M) -> "RigidTransform":
        M = np.asarray(M, dtype=float)
        return cls(matrix_to_quat(M[:3, :3]), M[:3, 3])

    def to_matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = quat_to_matrix(self.q)
        M[:3, 3] = self.t
        return M

    @property
    def R(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    def apply(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return pts @ self.R.T + self.t

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self ∘ other: apply ``other`` first, then ``self``."""
        return RigidTransform(quat_mul(self.q, other.q),
                              quat_rotate(self.q, other.t) + self.t)

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return self.compose(other)

    def inverse(self) -> "RigidTransform":
        qi = quat_conj(self.q)
        return RigidTransform(qi, -quat_rotate(qi, self.t))

    def rotation_angle_deg(self) -> float:
        return float(np.degrees(np.linalg.norm(quat_to_rotvec(self.q))))


def random_rigid(rng: np.random.Generator, trans_scale: float = 1.0,
                 max_angle_rad: float = np.pi) -> RigidTransform:
    """Random transform: uniform random axis, angle up to max_angle_rad."""
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, max_angle_rad)
    return RigidTransform(quat_from_rotvec(axis * angle),
                          rng.normal(scale=trans_scale, size=3))
