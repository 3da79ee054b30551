"""Gaussian primitives and the per-scene parameter container."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005, -1.0925484305920792, 0.5462742152960396)
SH_C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)

PARAM_NAMES = ("means", "quats", "log_scales", "opacity_logits", "sh")


def rgb_to_sh_dc(rgb):
    return (np.asarray(rgb, dtype=float) - 0.5) / SH_C0


def logit(p):
    p = np.asarray(p, dtype=float)
    return np.log(p / (1.0 - p))


@dataclass
class GaussianScene:
    """Learnable gaussians plus a fixed background colour.

    Opacities are stored as logits and scales as logs; colours are
    spherical-harmonic coefficients with shape (G, (degree+1)^2, 3), so
    degree 0 is a single DC term per channel.
    """

    means: Tensor
    quats: Tensor
    log_scales: Tensor
    opacity_logits: Tensor
    sh: Tensor
    background: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @classmethod
    def from_arrays(
        cls,
        means,
        quats,
        scales,
        opacities,
        colors,
        background=(0.0, 0.0, 0.0),
        sh_degree: int = 0,
        dtype=np.float64,
        requires_grad: bool = True,
    ) -> "GaussianScene":
        """Build a scene from natural parameters (linear scales, opacities in (0,1), RGB)."""
        means = np.asarray(means, dtype=float).reshape(-1, 3)
        n = means.shape[0]
        if n < 1:
            raise ValueError("a scene needs at least one gaussian")
        sh = np.zeros((n, (sh_degree + 1) ** 2, 3))
        sh[:, 0, :] = rgb_to_sh_dc(np.asarray(colors, dtype=float).reshape(n, 3))
        arrays = {
            "means": means,
            "quats": np.asarray(quats, dtype=float).reshape(n, 4),
            "log_scales": np.log(np.asarray(scales, dtype=float).reshape(n, 3)),
            "opacity_logits": logit(np.asarray(opacities, dtype=float).reshape(n)),
            "sh": sh,
        }
        tensors = {k: Tensor(v.astype(dtype), requires_grad=requires_grad, name=k) for k, v in arrays.items()}
        return cls(background=np.asarray(background, dtype=float), **tensors)

    @property
    def n(self) -> int:
        return self.means.shape[0]

    @property
    def sh_degree(self) -> int:
        return int(round(np.sqrt(self.sh.shape[1]))) - 1

    def parameters(self) -> dict[str, Tensor]:
        return {k: getattr(self, k) for k in PARAM_NAMES}

    def state(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.parameters().items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for k in PARAM_NAMES:
            getattr(self, k).data = np.array(state[k], dtype=getattr(self, k).dtype)

    def permuted(self, perm) -> "GaussianScene":
        perm = np.asarray(perm)
        return GaussianScene(
            background=self.background.copy(),
            **{k: Tensor(t.data[perm].copy(), requires_grad=t.requires_grad, name=k) for k, t in self.parameters().items()},
        )

    def colors_rgb(self) -> np.ndarray:
        """View-independent colours (DC term only)."""
        return np.maximum(SH_C0 * self.sh.data[:, 0, :] + 0.5, 0.0)


def quat_to_rotmat(q: Tensor) -> Tensor:
    """Batched unit-quaternion (w, x, y, z) to rotation matrices, (G, 4) -> (G, 3, 3)."""
    norm = ad.sqrt(ad.tsum(ad.square(q), axis=1, keepdims=True))
    q = q / norm
    w, x, y, z = (q[:, i] for i in range(4))
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    rows = [
        1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy),
        2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx),
        2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy),
    ]
    return ad.stack(rows, axis=1).reshape(-1, 3, 3)


def covariance_tensor(quats: Tensor, log_scales: Tensor) -> Tensor:
    """Sigma = R S S^T R^T for every gaussian, shape (G, 3, 3)."""
    rot = quat_to_rotmat(quats)
    m = rot * ad.exp(log_scales).reshape(-1, 1, 3)
    return m @ ad.swapaxes(m, -1, -2)


def covariance_world(quat, scale) -> np.ndarray:
    """World covariance of a single primitive from its quaternion and linear scales."""
    with ad.no_grad():
        cov = covariance_tensor(Tensor(np.asarray(quat, dtype=float)[None]), Tensor(np.log(np.asarray(scale, dtype=float))[None]))
    return cov.data[0]


def sh_basis(dirs: Tensor, degree: int) -> Tensor:
    """Real SH basis evaluated at unit directions, (G, 3) -> (G, (degree+1)^2)."""
    g = dirs.shape[0]
    cols = [Tensor(np.full(g, SH_C0, dtype=dirs.dtype))]
    if degree >= 1:
        x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]
        cols += [-SH_C1 * y, SH_C1 * z, -SH_C1 * x]
        if degree >= 2:
            xx, yy, zz = x * x, y * y, z * z
            xy, yz, xz = x * y, y * z, x * z
            cols += [
                SH_C2[0] * xy,
                SH_C2[1] * yz,
                SH_C2[2] * (2.0 * zz - xx - yy),
                SH_C2[3] * xz,
                SH_C2[4] * (xx - yy),
            ]
            if degree >= 3:
                cols += [
                    SH_C3[0] * y * (3.0 * xx - yy),
                    SH_C3[1] * xy * z,
                    SH_C3[2] * y * (4.0 * zz - xx - yy),
                    SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
                    SH_C3[4] * x * (4.0 * zz - xx - yy),
                    SH_C3[5] * z * (xx - yy),
                    SH_C3[6] * x * (xx - yy),
                ]
    return ad.stack(cols, axis=1)


def eval_colors(sh: Tensor, means: Tensor, cam_center: Tensor) -> Tensor:
    """Linear RGB per gaussian, clamped below at zero."""
    degree = int(round(np.sqrt(sh.shape[1]))) - 1
    if degree == 0:
        rgb = sh[:, 0, :] * SH_C0 + 0.5
    else:
        d = means - cam_center
        d = d / ad.sqrt(ad.tsum(ad.square(d), axis=1, keepdims=True))
        basis = sh_basis(d, degree)
        rgb = ad.tsum(basis.reshape(-1, basis.shape[1], 1) * sh, axis=1) + 0.5
    return ad.relu(rgb)
