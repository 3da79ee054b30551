"""Dense numpy rasterizer: reference implementation and import-time fallback.

All inputs arrive already sorted front to back. Pixel ``(row, col)`` has its
center at ``(col + 0.5, row + 0.5)``.
"""
from __future__ import annotations

import numpy as np

ALPHA_MAX = 0.99
ALPHA_MIN = 1.0 / 255.0
_CHUNK = 2048


def _pixel_grid(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    ys, xs = np.mgrid[0:height, 0:width]
    return xs.ravel() + 0.5, ys.ravel() + 0.5


def _alphas(px, py, means2d, conics, opacities, radii):
    """Per-(pixel, gaussian) quantities for one chunk of pixels."""
    dx = means2d[None, :, 0] - px[:, None]
    dy = means2d[None, :, 1] - py[:, None]
    a, b, c = conics[:, 0], conics[:, 1], conics[:, 2]
    power = -0.5 * (a * dx * dx + c * dy * dy) - b * dx * dy
    inside = (np.abs(dx) <= radii) & (np.abs(dy) <= radii) & (radii > 0)
    g = np.exp(np.minimum(power, 0.0))
    raw = opacities * g
    hit = inside & (raw >= ALPHA_MIN)
    clipped = raw > ALPHA_MAX
    alpha = np.where(hit, np.minimum(raw, ALPHA_MAX), 0.0)
    return dx, dy, g, alpha, hit & ~clipped


def _transmittance(alpha: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exclusive running product of (1 - alpha) and the final transmittance."""
    one_minus = 1.0 - alpha
    incl = np.cumprod(one_minus, axis=1)
    excl = np.empty_like(incl)
    excl[:, 0] = 1.0
    excl[:, 1:] = incl[:, :-1]
    final = incl[:, -1] if alpha.shape[1] else np.ones(alpha.shape[0])
    return excl, final


def forward(means2d, conics, opacities, colors, radii, background, height, width):
    """Return the (H, W, 3) image and the (H, W) final transmittance."""
    px, py = _pixel_grid(height, width)
    n_pix = px.size
    image = np.empty((n_pix, 3))
    final_t = np.empty(n_pix)
    if means2d.shape[0] == 0:
        image[:] = background
        final_t[:] = 1.0
        return image.reshape(height, width, 3), final_t.reshape(height, width)
    for s in range(0, n_pix, _CHUNK):
        sl = slice(s, s + _CHUNK)
        _, _, _, alpha, _ = _alphas(px[sl], py[sl], means2d, conics, opacities, radii)
        excl, fin = _transmittance(alpha)
        w = alpha * excl
        image[sl] = w @ colors + fin[:, None] * background
        final_t[sl] = fin
    return image.reshape(height, width, 3), final_t.reshape(height, width)


def blend_weights(means2d, conics, opacities, radii, height, width):
    """Per-pixel blending weights (H*W, M) and final transmittance (H*W,)."""
    px, py = _pixel_grid(height, width)
    _, _, _, alpha, _ = _alphas(px, py, means2d, conics, opacities, radii)
    excl, fin = _transmittance(alpha)
    return alpha * excl, fin


def backward(means2d, conics, opacities, colors, radii, background, height, width, grad_image):
    m = means2d.shape[0]
    g_means = np.zeros((m, 2))
    g_conics = np.zeros((m, 3))
    g_opac = np.zeros(m)
    g_colors = np.zeros((m, 3))
    if m == 0:
        return g_means, g_conics, g_opac, g_colors
    px, py = _pixel_grid(height, width)
    gimg = grad_image.reshape(-1, 3)
    bg_dot = gimg @ background
    for s in range(0, px.size, _CHUNK):
        sl = slice(s, s + _CHUNK)
        dx, dy, g, alpha, live = _alphas(px[sl], py[sl], means2d, conics, opacities, radii)
        excl, fin = _transmittance(alpha)
        w = alpha * excl
        gp = gimg[sl]
        g_colors += w.T @ gp
        u = gp @ colors.T  # (P, M): colour of each gaussian seen through the pixel gradient
        wu = w * u
        behind = np.cumsum(wu[:, ::-1], axis=1)[:, ::-1] - wu  # sum over k > i
        behind += (fin * bg_dot[sl])[:, None]
        d_alpha = excl * u - behind / (1.0 - alpha)
        d_alpha = np.where(live, d_alpha, 0.0)
        g_opac += (d_alpha * g).sum(axis=0)
        d_power = d_alpha * alpha
        a, b, c = conics[:, 0], conics[:, 1], conics[:, 2]
        g_means[:, 0] += (d_power * (-(a * dx) - b * dy)).sum(axis=0)
        g_means[:, 1] += (d_power * (-(c * dy) - b * dx)).sum(axis=0)
        g_conics[:, 0] += (d_power * (-0.5 * dx * dx)).sum(axis=0)
        g_conics[:, 1] += (d_power * (-dx * dy)).sum(axis=0)
        g_conics[:, 2] += (d_power * (-0.5 * dy * dy)).sum(axis=0)
    return g_means, g_conics, g_opac, g_colors
