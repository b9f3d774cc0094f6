"""Quaternion and rotation-vector helpers.

Quaternions are Hamilton convention, stored as [w, x, y, z] with the
scalar part first.  Rotation vectors are axis * angle.  Orientation
errors are body-side throughout the package: a perturbed orientation is
q_true = q_nominal * exp(delta_theta).
"""
from __future__ import annotations

import numpy as np

_SMALL_ANGLE = 1e-8


def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix: skew(v) @ u == cross(v, u)."""
    x, y, z = v
    return np.array([
        [0.0, -z, y],
        [z, 0.0, -x],
        [-y, x, 0.0],
    ])


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    return np.asarray(q, dtype=float) / np.linalg.norm(q)


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_from_rotvec(v: np.ndarray) -> np.ndarray:
    """Exponential map: rotation vector to unit quaternion."""
    v = np.asarray(v, dtype=float)
    angle = np.linalg.norm(v)
    if angle < _SMALL_ANGLE:
        # Second-order series keeps the map smooth through zero.
        half = 0.5 - angle * angle / 48.0
        q = np.concatenate(([1.0 - angle * angle / 8.0], half * v))
        return quat_normalize(q)
    axis = v / angle
    half_angle = 0.5 * angle
    return np.concatenate(([np.cos(half_angle)], np.sin(half_angle) * axis))


def quat_to_rotvec(q: np.ndarray) -> np.ndarray:
    """Logarithmic map: unit quaternion to rotation vector with angle <= pi.

    q and -q encode the same rotation; the scalar part is flipped positive
    so the returned angle is the short way around.
    """
    q = np.asarray(q, dtype=float)
    if q[0] < 0.0:
        q = -q
    w = min(q[0], 1.0)
    vec = q[1:]
    s = np.linalg.norm(vec)
    if s < _SMALL_ANGLE:
        return vec * (2.0 / w)
    angle = 2.0 * np.arctan2(s, w)
    return vec * (angle / s)


def rotvec_to_rotmat(v: np.ndarray) -> np.ndarray:
    return quat_to_rotmat(quat_from_rotvec(v))


def rotation_angle(q: np.ndarray) -> float:
    """Rotation angle of a unit quaternion, in [0, pi]."""
    w = abs(float(q[0]))
    s = float(np.linalg.norm(q[1:]))
    return 2.0 * np.arctan2(s, min(w, 1.0))
