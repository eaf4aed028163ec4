"""Rotation and rigid-transform utilities.

Quaternions are unit, ordered (w, x, y, z). Rotation differences are
reported as rotation vectors (axis * angle, radians).
"""

from dataclasses import dataclass, field

import numpy as np

QUAT_TOL = 1e-9


def normalize(v):
    """Unit vector along v. Raises on (near-)zero input."""
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n < 1e-15:
        raise ValueError("cannot normalize zero-length vector")
    return v / n


def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n < 1e-15:
        raise ValueError("cannot normalize zero-length quaternion")
    return q / n


def quat_multiply(a, b):
    """Hamilton product a*b, both (w,x,y,z)."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conjugate(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q):
    """Rotation matrix of a unit quaternion (w,x,y,z)."""
    w, x, y, z = q
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    return np.array(
        [
            [1 - 2 * (yy + zz), 2 * (xy - wz), 2 * (xz + wy)],
            [2 * (xy + wz), 1 - 2 * (xx + zz), 2 * (yz - wx)],
            [2 * (xz - wy), 2 * (yz + wx), 1 - 2 * (xx + yy)],
        ]
    )


def matrix_to_quat(m):
    """Unit quaternion (w,x,y,z) of a rotation matrix, w >= 0."""
    m = np.asarray(m, dtype=float)
    t = np.trace(m)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        q = np.array(
            [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
        )
    elif m[1, 1] > m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        q = np.array(
            [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
        )
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        q = np.array(
            [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
        )
    if q[0] < 0:
        q = -q
    return quat_normalize(q)


def rotvec_to_matrix(rv):
    """Rodrigues: rotation matrix of a rotation vector."""
    rv = np.asarray(rv, dtype=float)
    angle = np.linalg.norm(rv)
    if angle < 1e-12:
        return np.eye(3)
    axis = rv / angle
    return axis_angle_matrix(axis, angle)


def matrix_to_rotvec(m):
    """Rotation vector (axis * angle) of a rotation matrix."""
    q = matrix_to_quat(m)
    return quat_to_rotvec(q)


def quat_to_rotvec(q):
    w, x, y, z = quat_normalize(q)
    if w < 0:
        w, x, y, z = -w, -x, -y, -z
    sin_half = np.sqrt(x * x + y * y + z * z)
    if sin_half < 1e-12:
        return np.array([2 * x, 2 * y, 2 * z])  # small-angle limit
    angle = 2.0 * np.arctan2(sin_half, w)
    return np.array([x, y, z]) * (angle / sin_half)


def rotvec_to_quat(rv):
    rv = np.asarray(rv, dtype=float)
    angle = np.linalg.norm(rv)
    if angle < 1e-12:
        return quat_normalize(np.array([1.0, rv[0] / 2, rv[1] / 2, rv[2] / 2]))
    axis = rv / angle
    half = angle / 2
    return np.concatenate(([np.cos(half)], np.sin(half) * axis))


def axis_angle_matrix(axis, angle):
    """Rotation about a unit axis by angle (Rodrigues formula)."""
    x, y, z = axis
    c, s = np.cos(angle), np.sin(angle)
    t = 1 - c
    return np.array(
        [
            [c + x * x * t, x * y * t - z * s, x * z * t + y * s],
            [x * y * t + z * s, c + y * y * t, y * z * t - x * s],
            [x * z * t - y * s, y * z * t + x * s, c + z * z * t],
        ]
    )


def rpy_to_matrix(rpy):
    """URDF-style fixed-axis roll-pitch-yaw: R = Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
    r, p, y = rpy
    cr, sr = np.cos(r), np.sin(r)
    cp, sp = np.cos(p), np.sin(p)
    cy, sy = np.cos(y), np.sin(y)
    rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    return rz @ ry @ rx


def _frozen_array(a, shape):
    arr = np.array(a, dtype=float).reshape(shape)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Pose6D:
    """Rigid transform: position (m) + unit quaternion (w,x,y,z)."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self):
        pos = _frozen_array(self.position, (3,))
        rot = np.array(self.rotation, dtype=float).reshape(4)
        n = np.linalg.norm(rot)
        if abs(n - 1.0) > QUAT_TOL:
            raise ValueError(f"quaternion norm {n} departs from 1 beyond {QUAT_TOL}")
        rot = rot / n
        rot.flags.writeable = False
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "rotation", rot)

    @staticmethod
    def identity():
        return Pose6D()

    @staticmethod
    def from_matrix(r, p):
        return Pose6D(position=np.asarray(p, dtype=float), rotation=matrix_to_quat(r))

    def matrix(self):
        """4x4 homogeneous matrix."""
        m = np.eye(4)
        m[:3, :3] = quat_to_matrix(self.rotation)
        m[:3, 3] = self.position
        return m

    def rotation_matrix(self):
        return quat_to_matrix(self.rotation)

    def compose(self, other):
        """self * other (apply other first, then self)."""
        r = quat_multiply(self.rotation, other.rotation)
        p = self.position + quat_to_matrix(self.rotation) @ other.position
        return Pose6D(position=p, rotation=quat_normalize(r))

    def inverse(self):
        rinv = quat_conjugate(self.rotation)
        return Pose6D(
            position=-(quat_to_matrix(rinv) @ self.position), rotation=rinv
        )

    def transform_point(self, p):
        return quat_to_matrix(self.rotation) @ np.asarray(p, dtype=float) + self.position

    def transform_points(self, pts):
        pts = np.asarray(pts, dtype=float)
        return pts @ quat_to_matrix(self.rotation).T + self.position

    def rotate_vector(self, v):
        return quat_to_matrix(self.rotation) @ np.asarray(v, dtype=float)
