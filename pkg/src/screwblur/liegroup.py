"""Exact SO(3) / SE(3) kinematics in plain numpy.

Rotations are 3x3 arrays, rigid transforms are :class:`RigidTransform`
records holding a rotation and a translation. Everything here is a pure
function of its inputs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

AXIS_EPS = 1e-8


class NotARotationError(ValueError):
    pass


@dataclass(frozen=True)
class ScrewAxis:
    """Unit screw ``(axis, trans)`` together with the motion amount ``angle``.

    ``axis`` is either a unit vector or exactly zero; the zero axis is the
    pure-translation screw, where ``angle`` is the distance travelled along
    ``trans``.
    """

    axis: np.ndarray
    angle: float
    trans: np.ndarray

    @classmethod
    def from_raw(cls, omega, angle: float, trans) -> "ScrewAxis":
        omega = np.asarray(omega, dtype=float)
        n = np.linalg.norm(omega)
        axis = np.zeros(3) if n < AXIS_EPS else omega / n
        return cls(axis, float(angle), np.asarray(trans, dtype=float))


@dataclass(frozen=True)
class RigidTransform:
    rot: np.ndarray
    trans: np.ndarray

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m) -> "RigidTransform":
        m = np.asarray(m, dtype=float)
        if m.shape != (4, 4):
            raise ValueError(f"expected a 4x4 matrix, got shape {m.shape}")
        return cls(m[:3, :3].copy(), m[:3, 3].copy())

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rot
        m[:3, 3] = self.trans
        return m

    def inverse(self) -> "RigidTransform":
        rt = self.rot.T
        return RigidTransform(rt, -rt @ self.trans)

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return compose(self, other)

    def residuals(self) -> tuple[float, float]:
        """(max |R R^T - I|, |det R - 1|)."""
        return (
            float(np.abs(self.rot @ self.rot.T - np.eye(3)).max()),
            abs(float(np.linalg.det(self.rot)) - 1.0),
        )


def skew(v) -> np.ndarray:
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(m: np.ndarray) -> np.ndarray:
    return np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]]) * 0.5


def exp_so3(axis, angle: float) -> np.ndarray:
    """Rodrigues: ``I + sin(a) K + (1 - cos(a)) K^2`` with ``K = [axis]``."""
    k = skew(axis)
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def g_theta(axis, angle: float) -> np.ndarray:
    """Translation factor of the screw exponential.

    ``I a + (1 - cos a) K + (a - sin a) K^2``, i.e. the integral of
    ``exp(K s)`` for ``s`` in ``[0, a]``. A zero axis gives ``I a``.
    """
    k = skew(axis)
    return np.eye(3) * angle + (1.0 - np.cos(angle)) * k + (angle - np.sin(angle)) * (k @ k)


def exp_se3(s: ScrewAxis) -> RigidTransform:
    return RigidTransform(exp_so3(s.axis, s.angle), g_theta(s.axis, s.angle) @ s.trans)


def twist_matrix(s: ScrewAxis) -> np.ndarray:
    """4x4 se(3) matrix ``[S]`` (not scaled by the angle)."""
    m = np.zeros((4, 4))
    m[:3, :3] = skew(s.axis)
    m[:3, 3] = s.trans
    return m


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    return RigidTransform(a.rot @ b.rot, a.rot @ b.trans + a.trans)


def log_so3(r, tol: float = 1e-6) -> tuple[np.ndarray, float]:
    """Inverse of :func:`exp_so3`, returning ``(axis, angle)`` with angle in [0, pi].

    The identity maps to the canonical axis ``(1, 0, 0)`` with angle 0.
    Raises :class:`NotARotationError` when ``r`` is not a proper rotation.
    """
    r = np.asarray(r, dtype=float)
    res = max(np.abs(r @ r.T - np.eye(3)).max(), abs(np.linalg.det(r) - 1.0))
    if res > tol:
        raise NotARotationError(f"matrix is not a rotation (residual {res:.3e})")
    c = np.clip((np.trace(r) - 1.0) * 0.5, -1.0, 1.0)
    w = vee(r)
    s = np.linalg.norm(w)
    angle = float(np.arctan2(s, c))
    if angle < 1e-12:
        return np.array([1.0, 0.0, 0.0]), 0.0
    if c > -0.9:
        return w / s, angle
    # near pi the antisymmetric part vanishes; read the axis off the symmetric part
    b = (r + r.T) * 0.5 - c * np.eye(3)
    i = int(np.argmax(np.diag(b)))
    axis = b[:, i] / np.sqrt(b[i, i])
    if axis @ w < 0:
        axis = -axis
    axis /= np.linalg.norm(axis)
    return axis, angle


def rotation_angle(r) -> float:
    """Geodesic angle of a rotation matrix."""
    r = np.asarray(r, dtype=float)
    c = np.clip((np.trace(r) - 1.0) * 0.5, -1.0, 1.0)
    return float(np.arctan2(np.linalg.norm(vee(r)), c))


def geodesic_distance(r1, r2) -> float:
    return rotation_angle(np.asarray(r1).T @ np.asarray(r2))


def interpolate(a: RigidTransform, b: RigidTransform, t: float) -> RigidTransform:
    """Geodesic rotation and linear translation interpolation between two poses."""
    axis, angle = log_so3(a.rot.T @ b.rot)
    return RigidTransform(a.rot @ exp_so3(axis, angle * t), (1.0 - t) * a.trans + t * b.trans)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=4)
    return quat_to_rotation(q / np.linalg.norm(q))


def quat_to_rotation(q) -> np.ndarray:
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def look_at(eye, target, up=(0.0, 1.0, 0.0)) -> RigidTransform:
    """World-to-camera transform for a camera at ``eye`` looking at ``target``.

    Camera axes follow the usual vision convention: x right, y down, z forward.
    """
    eye = np.asarray(eye, dtype=float)
    fwd = np.asarray(target, dtype=float) - eye
    fwd /= np.linalg.norm(fwd)
    right = np.cross(fwd, np.asarray(up, dtype=float))
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    rot = np.stack([right, down, fwd])
    return RigidTransform(rot, -rot @ eye)
