import math

import numpy as np
import pytest

from screwblur import autodiff as ad
from screwblur.autodiff import ShapeError, Tensor
from screwblur.autodiff.gradcheck import gradcheck
from screwblur.losses import (
    LossWeights,
    det3,
    gaussian_window,
    l1,
    psnr,
    reg_det,
    reg_ortho,
    ssim,
    ssim_map,
    total_loss,
)


def brute_ssim_map(x, y, sigma=1.5, radius=5):
    """Direct windowed statistics with symmetric border extension."""
    h, w = x.shape
    win = gaussian_window(sigma, radius)
    win2 = np.outer(win, win)
    xp = np.pad(x, radius, mode="symmetric")
    yp = np.pad(y, radius, mode="symmetric")
    out = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            a = xp[i : i + 2 * radius + 1, j : j + 2 * radius + 1]
            b = yp[i : i + 2 * radius + 1, j : j + 2 * radius + 1]
            mx, my = (win2 * a).sum(), (win2 * b).sum()
            vx = (win2 * a * a).sum() - mx * mx
            vy = (win2 * b * b).sum() - my * my
            cxy = (win2 * a * b).sum() - mx * my
            c1, c2 = 0.01**2, 0.03**2
            out[i, j] = (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2))
    return out


def test_ssim_matches_brute_force():
    rng = np.random.default_rng(0)
    x = rng.uniform(size=(13, 9, 1))
    y = np.clip(x + rng.normal(scale=0.1, size=x.shape), 0, 1)
    ours = ssim_map(x, y).data[0]
    np.testing.assert_allclose(ours, brute_ssim_map(x[..., 0], y[..., 0]), atol=1e-12)


def test_ssim_matches_skimage_interior():
    metrics = pytest.importorskip("skimage.metrics")
    rng = np.random.default_rng(1)
    x = rng.uniform(size=(32, 32, 3))
    y = np.clip(x + rng.normal(scale=0.1, size=x.shape), 0, 1)
    _, full = metrics.structural_similarity(
        x, y, gaussian_weights=True, sigma=1.5, use_sample_covariance=False, data_range=1.0, channel_axis=-1, full=True
    )
    ours = np.transpose(ssim_map(x, y).data, (1, 2, 0))
    np.testing.assert_allclose(ours[5:-5, 5:-5], full[5:-5, 5:-5], atol=1e-10)


def test_ssim_identity_and_small_images():
    x = np.random.default_rng(2).uniform(size=(4, 3, 3))
    assert ssim(x, x) == pytest.approx(1.0)
    assert ssim(x, 1 - x) < 0.5


def test_psnr():
    a = np.zeros((4, 4, 3))
    assert psnr(a, a) == math.inf
    assert psnr(a, a + 0.1) == pytest.approx(20.0)
    with pytest.raises(ShapeError):
        psnr(a, a[:2])


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        l1(np.zeros((2, 2, 3)), np.zeros((2, 3, 3)))
    with pytest.raises(ShapeError):
        ssim_map(np.zeros((2, 2, 3)), np.zeros((2, 3, 3)))


def test_regularisers_vanish_on_rotations():
    from screwblur.liegroup import random_rotation

    rng = np.random.default_rng(3)
    rots = np.stack([random_rotation(rng) for _ in range(4)])
    assert reg_ortho(rots).item() < 1e-14
    assert reg_det(rots).item() < 1e-14
    np.testing.assert_allclose(det3(Tensor(rots)).data, 1.0)


def test_regulariser_values():
    m = np.diag([2.0, 1.0, 1.0])
    assert reg_ortho(m).item() == pytest.approx(3.0)
    assert reg_det(m).item() == pytest.approx(1.0)


def test_total_loss_weighting_and_gradient():
    rng = np.random.default_rng(4)
    pred = rng.uniform(size=(8, 8, 3))
    gt = rng.uniform(size=(8, 8, 3))
    rots = np.eye(3) + rng.normal(scale=0.05, size=(3, 3, 3))
    w = LossWeights(0.3, 1e-3, 1e-3)
    loss, terms = total_loss(pred, gt, rots, w)
    expect = 0.7 * terms["l1"] + 0.3 * terms["dssim"] + 1e-3 * (terms["reg_det"] + terms["reg_ortho"])
    assert loss.item() == pytest.approx(expect)
    assert terms["loss"] == pytest.approx(loss.item())
    fn = lambda p, r: total_loss(p, gt, r, w)[0]
    assert max(gradcheck(fn, [pred, rots])) < 1e-6


def test_total_loss_without_deform():
    x = np.full((4, 4, 3), 0.5)
    loss, terms = total_loss(x, x, None)
    assert loss.item() == pytest.approx(0.0, abs=1e-12)
    assert terms["reg_det"] == 0.0 and terms["reg_ortho"] == 0.0


def test_weight_validation():
    with pytest.raises(ValueError):
        LossWeights(lambda_c=1.5)
    with pytest.raises(ValueError):
        LossWeights(lambda_det=-1.0)
