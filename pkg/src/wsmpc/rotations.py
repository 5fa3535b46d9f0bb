"""Unit-quaternion helpers (scalar-first, Hamilton convention, body-to-inertial)."""
import numpy as np

from .errors import ZeroQuaternion


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n == 0):
        raise ZeroQuaternion("cannot normalize a zero quaternion")
    return q / n


def quat_to_rotmat(q) -> np.ndarray:
    """Rotation matrix for quaternion(s) ``q = (b0, b1, b2, b3)``; shape ``(..., 3, 3)``.

    The input is renormalized first, so slightly non-unit quaternions are accepted.
    """
    b0, b1, b2, b3 = np.moveaxis(quat_normalize(q), -1, 0)
    R = np.empty(b0.shape + (3, 3))
    R[..., 0, 0] = 1 - 2 * (b2 * b2 + b3 * b3)
    R[..., 0, 1] = 2 * (b1 * b2 - b0 * b3)
    R[..., 0, 2] = 2 * (b1 * b3 + b0 * b2)
    R[..., 1, 0] = 2 * (b1 * b2 + b0 * b3)
    R[..., 1, 1] = 1 - 2 * (b1 * b1 + b3 * b3)
    R[..., 1, 2] = 2 * (b2 * b3 - b0 * b1)
    R[..., 2, 0] = 2 * (b1 * b3 - b0 * b2)
    R[..., 2, 1] = 2 * (b2 * b3 + b0 * b1)
    R[..., 2, 2] = 1 - 2 * (b1 * b1 + b2 * b2)
    return R


def thrust_direction(q) -> np.ndarray:
    """Third column ``(R13, R23, R33)`` of the rotation matrix; works on ``(..., 4)`` arrays."""
    b0, b1, b2, b3 = np.moveaxis(quat_normalize(q), -1, 0)
    return np.stack([2 * (b1 * b3 + b0 * b2),
                     2 * (b2 * b3 - b0 * b1),
                     1 - 2 * (b1 * b1 + b2 * b2)], axis=-1)


def quat_rate(q, omega) -> np.ndarray:
    """Kinematics ``0.5 * Omega(omega) @ q`` for body rates ``omega = (p, q, r)``."""
    b0, b1, b2, b3 = np.moveaxis(np.asarray(q, dtype=float), -1, 0)
    p, qq, r = np.moveaxis(np.asarray(omega, dtype=float), -1, 0)
    return 0.5 * np.stack([-p * b1 - qq * b2 - r * b3,
                           p * b0 + r * b2 - qq * b3,
                           qq * b0 - r * b1 + p * b3,
                           r * b0 + qq * b1 - p * b2], axis=-1)


def quat_to_euler_zyx(q) -> np.ndarray:
    """Roll, pitch, yaw (ZYX convention) from a quaternion."""
    b0, b1, b2, b3 = np.moveaxis(quat_normalize(q), -1, 0)
    roll = np.arctan2(2 * (b0 * b1 + b2 * b3), 1 - 2 * (b1 * b1 + b2 * b2))
    pitch = np.arcsin(np.clip(2 * (b0 * b2 - b3 * b1), -1.0, 1.0))
    yaw = np.arctan2(2 * (b0 * b3 + b1 * b2), 1 - 2 * (b2 * b2 + b3 * b3))
    return np.stack([roll, pitch, yaw], axis=-1)


def euler_zyx_to_quat(angles) -> np.ndarray:
    roll, pitch, yaw = np.moveaxis(np.asarray(angles, dtype=float), -1, 0)
    cr, sr = np.cos(roll / 2), np.sin(roll / 2)
    cp, sp = np.cos(pitch / 2), np.sin(pitch / 2)
    cy, sy = np.cos(yaw / 2), np.sin(yaw / 2)
    return np.stack([cr * cp * cy + sr * sp * sy,
                     sr * cp * cy - cr * sp * sy,
                     cr * sp * cy + sr * cp * sy,
                     cr * cp * sy - sr * sp * cy], axis=-1)
