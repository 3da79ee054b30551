"""Photometric objective, deformation regularisers and image metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor

SSIM_SIGMA = 1.5
SSIM_RADIUS = 5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


@dataclass
class LossWeights:
    lambda_c: float = 0.3
    lambda_det: float = 1e-3
    lambda_ortho: float = 1e-3

    def __post_init__(self):
        if not 0.0 <= self.lambda_c <= 1.0:
            raise ValueError(f"lambda_c must lie in [0, 1], got {self.lambda_c}")
        if self.lambda_det < 0 or self.lambda_ortho < 0:
            raise ValueError("regulariser weights must be non-negative")


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: prediction {a.shape} and target {b.shape} differ")


def l1(pred, target) -> Tensor:
    pred, target = ad.astensor(pred), ad.astensor(target)
    _same_shape("l1", pred, target)
    return ad.mean(ad.tabs(pred - target))


def gaussian_window(sigma: float = SSIM_SIGMA, radius: int = SSIM_RADIUS) -> np.ndarray:
    x = np.arange(-radius, radius + 1, dtype=float)
    w = np.exp(-0.5 * (x / sigma) ** 2)
    return w / w.sum()


def _reflect(idx: int, n: int) -> int:
    # half-sample symmetric extension: ... c b a | a b c ... c | c b a ...
    m = idx % (2 * n)
    return 2 * n - 1 - m if m >= n else m


@lru_cache(maxsize=32)
def _filter_matrix(n: int, sigma: float, radius: int) -> np.ndarray:
    w = gaussian_window(sigma, radius)
    mat = np.zeros((n, n))
    for i in range(n):
        for k, wk in enumerate(w):
            mat[i, _reflect(i + k - radius, n)] += wk
    return mat


def _blur(x: Tensor, fh: np.ndarray, fwt: np.ndarray) -> Tensor:
    # x: (C, H, W)
    return (fh @ x) @ fwt


def ssim_map(pred, target) -> Tensor:
    """Per-pixel SSIM, shape (C, H, W), with an 11x11 gaussian window (sigma 1.5).

    Borders use symmetric reflection so images smaller than the window work.
    """
    pred, target = ad.astensor(pred), ad.astensor(target)
    _same_shape("ssim", pred, target)
    if pred.ndim == 2:
        pred, target = pred.reshape(*pred.shape, 1), target.reshape(*target.shape, 1)
    h, w = pred.shape[0], pred.shape[1]
    fh = _filter_matrix(h, SSIM_SIGMA, SSIM_RADIUS).astype(pred.dtype)
    fwt = _filter_matrix(w, SSIM_SIGMA, SSIM_RADIUS).T.astype(pred.dtype)
    x = ad.transpose(pred, (2, 0, 1))
    y = ad.transpose(target, (2, 0, 1))
    mu_x = _blur(x, fh, fwt)
    mu_y = _blur(y, fh, fwt)
    mu_xx, mu_yy, mu_xy = mu_x * mu_x, mu_y * mu_y, mu_x * mu_y
    s_xx = _blur(x * x, fh, fwt) - mu_xx
    s_yy = _blur(y * y, fh, fwt) - mu_yy
    s_xy = _blur(x * y, fh, fwt) - mu_xy
    num = (2.0 * mu_xy + SSIM_C1) * (2.0 * s_xy + SSIM_C2)
    den = (mu_xx + mu_yy + SSIM_C1) * (s_xx + s_yy + SSIM_C2)
    return num / den


def ssim_tensor(pred, target) -> Tensor:
    return ad.mean(ssim_map(pred, target))


def dssim(pred, target) -> Tensor:
    return 1.0 - ssim_tensor(pred, target)


def det3(m: Tensor) -> Tensor:
    """Batched 3x3 determinant by cofactor expansion, (N, 3, 3) -> (N,)."""
    a = [[m[:, i, j] for j in range(3)] for i in range(3)]
    return (
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    )


def _as_batch(rots) -> Tensor:
    if isinstance(rots, (list, tuple)):
        rots = ad.stack([ad.astensor(r) for r in rots], axis=0)
    rots = ad.astensor(rots)
    if rots.ndim == 2:
        rots = rots.reshape(1, 3, 3)
    return rots


def reg_ortho(rots) -> Tensor:
    """Mean over matrices of the Frobenius norm of ``R R^T - I``."""
    r = _as_batch(rots)
    resid = r @ ad.swapaxes(r, -1, -2) - np.eye(3, dtype=r.dtype)
    return ad.mean(ad.sqrt(ad.tsum(ad.square(resid), axis=(1, 2))))


def reg_det(rots) -> Tensor:
    """Mean over matrices of ``|det R - 1|``."""
    return ad.mean(ad.tabs(det3(_as_batch(rots)) - 1.0))


def total_loss(pred_blur, gt_blur, deform_rots, w: LossWeights | None = None) -> tuple[Tensor, dict[str, float]]:
    """Weighted objective and its individual terms (as floats, for logging)."""
    w = w or LossWeights()
    l1_t = l1(pred_blur, gt_blur)
    ds_t = dssim(pred_blur, gt_blur)
    loss = (1.0 - w.lambda_c) * l1_t + w.lambda_c * ds_t
    terms = {"l1": l1_t.item(), "dssim": ds_t.item(), "reg_det": 0.0, "reg_ortho": 0.0}
    if deform_rots is not None:
        rd = reg_det(deform_rots)
        ro = reg_ortho(deform_rots)
        loss = loss + w.lambda_det * rd + w.lambda_ortho * ro
        terms["reg_det"] = rd.item()
        terms["reg_ortho"] = ro.item()
    terms["loss"] = loss.item()
    return loss, terms


# -- metrics (plain arrays) ----------------------------------------------
def psnr(pred, target) -> float:
    """PSNR in dB for images in [0, 1]; identical images give ``inf``."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"psnr: prediction {pred.shape} and target {target.shape} differ")
    mse = float(np.mean((pred - target) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def ssim(pred, target) -> float:
    with ad.no_grad():
        return ssim_tensor(np.asarray(pred, dtype=np.float64), np.asarray(target, dtype=np.float64)).item()
