"""2D convolution with zero "same" padding, channels-last.

The padded batch is flattened to rows of channels. A kernel tap at offset
(di, dj) then reads rows shifted by ``di * Wp + dj``, so every tap touches a
contiguous row range. Border rows collect garbage and are discarded;
interior rows only see their own frame. Thin layers gather the taps into one
GEMM (few input channels) or scatter one GEMM's output over the taps (few
output channels); wide layers run one GEMM per tap.
"""
from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor, _record, astensor


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Convolve ``x`` of shape (B, H, W, Cin) with ``weight`` (kh, kw, Cin, Cout).

    Stride 1, odd kernel extents, zero padding so the output keeps H x W.
    """
    x = astensor(x)
    weight = astensor(weight, like=x)
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d: expected 4-D input and weight, got {x.shape} and {weight.shape}")
    kh, kw, cin, cout = weight.shape
    b, h, w, c = x.shape
    if c != cin:
        raise ShapeError(f"conv2d: input channels {x.shape} do not match weight {weight.shape}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d: kernel extents must be odd, got {weight.shape}")
    ph, pw = kh // 2, kw // 2
    hp, wp = h + 2 * ph, w + 2 * pw
    dtype = np.result_type(x.dtype, weight.dtype)
    n_rows = b * hp * wp
    margin = ph * wp + pw
    offsets = [margin + (i - ph) * wp + (j - pw) for i in range(kh) for j in range(kw)]
    wtaps = weight.data.reshape(kh * kw, cin, cout)

    # padded input with `margin` zero rows at both ends
    xflat = np.zeros((n_rows + 2 * margin, cin), dtype=dtype)
    xflat[margin : margin + n_rows].reshape(b, hp, wp, cin)[:, ph : ph + h, pw : pw + w] = x.data
    k = kh * kw
    if cin * k <= cout:
        mode = "cols"  # gather taps along K, one GEMM
    elif cout * k <= cin:
        mode = "rows"  # one GEMM to all taps, then shifted sums
    else:
        mode = "taps"
    if mode == "cols":
        cols = np.empty((n_rows, k * cin), dtype=dtype)
        for t, off in enumerate(offsets):
            cols[:, t * cin : (t + 1) * cin] = xflat[off : off + n_rows]
        acc = cols @ wtaps.reshape(k * cin, cout)
    elif mode == "rows":
        wall = np.ascontiguousarray(wtaps.transpose(1, 0, 2).reshape(cin, k * cout))
        z = xflat @ wall
        acc = np.zeros((n_rows, cout), dtype=dtype)
        for t, off in enumerate(offsets):
            acc += z[off : off + n_rows, t * cout : (t + 1) * cout]
    else:
        acc = np.zeros((n_rows, cout), dtype=dtype)
        tmp = np.empty_like(acc)
        for t, off in enumerate(offsets):
            np.matmul(xflat[off : off + n_rows], wtaps[t], out=tmp)
            acc += tmp
    out = np.ascontiguousarray(acc.reshape(b, hp, wp, cout)[:, ph : ph + h, pw : pw + w])
    parents = [x, weight]
    if bias is not None:
        bias = astensor(bias, like=x)
        if bias.shape != (cout,):
            raise ShapeError(f"conv2d: bias shape {bias.shape} does not match {cout} output channels")
        out += bias.data
        parents.append(bias)

    def vjp(g):
        gflat = np.zeros((n_rows, cout), dtype=dtype)
        gflat.reshape(b, hp, wp, cout)[:, ph : ph + h, pw : pw + w] = g
        gxflat = np.zeros_like(xflat) if x.requires_grad else None
        gw = None
        if mode == "cols":
            if weight.requires_grad:
                gw = (cols.T @ gflat).reshape(k, cin, cout)
            if gxflat is not None:
                gcols = gflat @ wtaps.reshape(k * cin, cout).T
                for t, off in enumerate(offsets):
                    gxflat[off : off + n_rows] += gcols[:, t * cin : (t + 1) * cin]
        elif mode == "rows":
            gz = np.zeros((n_rows + 2 * margin, k * cout), dtype=dtype)
            for t, off in enumerate(offsets):
                gz[off : off + n_rows, t * cout : (t + 1) * cout] = gflat
            if weight.requires_grad:
                gw = (xflat.T @ gz).reshape(cin, k, cout).transpose(1, 0, 2)
            if gxflat is not None:
                gxflat = gz @ wall.T
        else:
            if gxflat is not None:
                tmp = np.empty((n_rows, cin), dtype=dtype)
                for t, off in enumerate(offsets):
                    np.matmul(gflat, wtaps[t].T, out=tmp)
                    gxflat[off : off + n_rows] += tmp
            if weight.requires_grad:
                gw = np.empty_like(wtaps)
                for t, off in enumerate(offsets):
                    np.matmul(xflat[off : off + n_rows].T, gflat, out=gw[t])
        gx = None
        if gxflat is not None:
            gx = np.ascontiguousarray(gxflat[margin : margin + n_rows].reshape(b, hp, wp, cin)[:, ph : ph + h, pw : pw + w])
        gweight = None if gw is None else np.ascontiguousarray(gw).reshape(kh, kw, cin, cout)
        grads = [gx, gweight]
        if bias is not None:
            grads.append(g.sum(axis=(0, 1, 2)))
        return tuple(grads)

    return _record(out, parents, vjp)
