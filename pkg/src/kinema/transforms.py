"""Rigid transforms as unit quaternion + translation.

Convention: quaternion is (w, x, y, z), transforms map child-frame points
into the parent frame via p' = R(q) p + t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

UNIT_TOL = 1e-9


def quat_normalize(q):
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q)
    if n == 0.0:
        raise ValueError("zero quaternion")
    return q / n


def quat_multiply(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conjugate(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_rotate(q, v):
    """Rotate 3-vector(s) v by unit quaternion q."""
    w, x, y, z = q
    u = np.array([x, y, z])
    v = np.asarray(v, dtype=np.float64)
    uv = np.cross(u, v)
    return v + 2.0 * (w * uv + np.cross(u, uv))


def quat_to_matrix(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_from_matrix(m):
    m = np.asarray(m, dtype=np.float64)
    tr = np.trace(m)
    if tr > 0:
        s = math.sqrt(tr + 1.0) * 2.0
        w = 0.25 * s
        x = (m[2, 1] - m[1, 2]) / s
        y = (m[0, 2] - m[2, 0]) / s
        z = (m[1, 0] - m[0, 1]) / s
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        w = (m[2, 1] - m[1, 2]) / s
        x = 0.25 * s
        y = (m[0, 1] + m[1, 0]) / s
        z = (m[0, 2] + m[2, 0]) / s
    elif m[1, 1] > m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        w = (m[0, 2] - m[2, 0]) / s
        x = (m[0, 1] + m[1, 0]) / s
        y = 0.25 * s
        z = (m[1, 2] + m[2, 1]) / s
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        w = (m[1, 0] - m[0, 1]) / s
        x = (m[0, 2] + m[2, 0]) / s
        y = (m[1, 2] + m[2, 1]) / s
        z = 0.25 * s
    return quat_normalize([w, x, y, z])


def quat_from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(axis)
    if n == 0.0:
        raise ValueError("zero axis")
    half = 0.5 * angle
    s = math.sin(half) / n
    return np.array([math.cos(half), axis[0] * s, axis[1] * s, axis[2] * s])


def quat_log(q):
    """Rotation log-map: axis * angle 3-vector, smooth for angles < pi."""
    w, x, y, z = q
    if w < 0:  # pick the short arc
        w, x, y, z = -w, -x, -y, -z
    vn = math.sqrt(x * x + y * y + z * z)
    if vn < 1e-12:
        return np.array([2.0 * x, 2.0 * y, 2.0 * z])
    angle = 2.0 * math.atan2(vn, w)
    return np.array([x, y, z]) * (angle / vn)


@dataclass(frozen=True)
class RigidTransform:
    """SE(3) element stored as unit quaternion (w,x,y,z) + translation (m)."""

    rotation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        q = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64)
        if q.shape != (4,) or t.shape != (3,):
            raise ValueError("rotation must be (4,), translation (3,)")
        if abs(np.linalg.norm(q) - 1.0) > 1e-6:
            q = quat_normalize(q)
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform()

    @staticmethod
    def from_translation(t) -> "RigidTransform":
        return RigidTransform(np.array([1.0, 0.0, 0.0, 0.0]), np.asarray(t, dtype=np.float64))

    @staticmethod
    def from_axis_angle(axis, angle, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        return RigidTransform(quat_from_axis_angle(axis, angle), np.asarray(translation, dtype=np.float64))

    @staticmethod
    def from_rpy(rpy, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        """URDF fixed-axis roll-pitch-yaw (extrinsic XYZ)."""
        r, p, y = rpy
        qx = quat_from_axis_angle([1, 0, 0], r)
        qy = quat_from_axis_angle([0, 1, 0], p)
        qz = quat_from_axis_angle([0, 0, 1], y)
        return RigidTransform(quat_multiply(qz, quat_multiply(qy, qx)),
                              np.asarray(translation, dtype=np.float64))

    @staticmethod
    def from_matrix(m) -> "RigidTransform":
        m = np.asarray(m, dtype=np.float64)
        return RigidTransform(quat_from_matrix(m[:3, :3]), m[:3, 3].copy())

    def to_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = quat_to_matrix(self.rotation)
        m[:3, 3] = self.translation
        return m

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        return RigidTransform(
            quat_multiply(self.rotation, other.rotation),
            self.translation + quat_rotate(self.rotation, other.translation),
        )

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return self.compose(other)

    def inverse(self) -> "RigidTransform":
        qi = quat_conjugate(self.rotation)
        return RigidTransform(qi, -quat_rotate(qi, self.translation))

    def apply(self, points) -> np.ndarray:
        """Apply to a 3-vector or an (N,3) array."""
        points = np.asarray(points, dtype=np.float64)
        if points.ndim == 1:
            return quat_rotate(self.rotation, points) + self.translation
        r = quat_to_matrix(self.rotation)
        return points @ r.T + self.translation

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    def is_close(self, other: "RigidTransform", tol: float = 1e-9) -> bool:
        dq = min(np.linalg.norm(self.rotation - other.rotation),
                 np.linalg.norm(self.rotation + other.rotation))
        return dq <= tol and np.linalg.norm(self.translation - other.translation) <= tol

    def to_json(self) -> dict:
        return {"translation": list(self.translation), "quaternion": list(self.rotation)}

    @staticmethod
    def from_json(obj) -> "RigidTransform":
        return RigidTransform(np.asarray(obj["quaternion"], dtype=np.float64),
                              np.asarray(obj["translation"], dtype=np.float64))


def pose_error(current: RigidTransform, target: RigidTransform):
    """6-vector (translation, rotation log-map) error target - current, world frame."""
    dt = target.translation - current.translation
    dq = quat_multiply(target.rotation, quat_conjugate(current.rotation))
    return dt, quat_log(dq)
