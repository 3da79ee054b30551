"""Front-to-back alpha blending as a single recorded operation.

The compiled kernels in ``_raster_ext`` are used when they import; otherwise
(or with ``SCREWBLUR_PURE_PYTHON=1``) the dense numpy version takes over.
"""
from __future__ import annotations

import os

import numpy as np

from ..autodiff import Tensor, custom
from . import _raster_py

try:
    if os.environ.get("SCREWBLUR_PURE_PYTHON"):
        raise ImportError("compiled backend disabled by SCREWBLUR_PURE_PYTHON")
    from . import _raster_ext as _compiled
except ImportError:
    _compiled = None

BACKENDS = {"python": _raster_py}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled

_active = "compiled" if _compiled is not None else "python"


def backend() -> str:
    return _active


def set_backend(name: str) -> None:
    global _active
    if name not in BACKENDS:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}")
    _active = name


def _f64(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float64)


def rasterize(
    means2d: Tensor,
    conics: Tensor,
    opacities: Tensor,
    colors: Tensor,
    radii: np.ndarray,
    depths: np.ndarray,
    background: np.ndarray,
    height: int,
    width: int,
) -> Tensor:
    """Blend projected gaussians into an (H, W, 3) image.

    Gaussians are visited in ascending depth (stable, so equal depths keep
    their index order). ``radii`` of zero mark gaussians to skip.
    """
    order = np.argsort(depths, kind="stable")
    impl = BACKENDS[_active]
    args = (
        _f64(means2d.data[order]),
        _f64(conics.data[order]),
        _f64(opacities.data[order]),
        _f64(colors.data[order]),
        _f64(np.asarray(radii, dtype=np.float64)[order]),
        _f64(background),
        int(height),
        int(width),
    )
    image, _ = impl.forward(*args)
    dtype = means2d.dtype

    def vjp(g):
        gm, gc, go, gcol = impl.backward(*args, _f64(g))
        out = []
        for sorted_grad, ref in zip((gm, gc, go, gcol), (means2d, conics, opacities, colors)):
            full = np.empty_like(sorted_grad)
            full[order] = sorted_grad
            out.append(full.astype(ref.dtype, copy=False))
        return tuple(out)

    return custom(image.astype(dtype, copy=False), (means2d, conics, opacities, colors), vjp)
