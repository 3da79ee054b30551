"""Pixel-wise weighted fusion of sub-frame renders into one blurry image."""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor, conv2d


class WeightCnn:
    """Three 3x3 conv layers (in -> 64 -> 64 -> 3) with ReLU in between.

    Weights are Kaiming-uniform for ReLU fan-in, biases start at zero.
    """

    def __init__(self, channels: int = 64, in_channels: int = 3, seed: int = 0, dtype=np.float64):
        rng = np.random.default_rng(seed)
        shapes = [(3, 3, in_channels, channels), (3, 3, channels, channels), (3, 3, channels, 3)]
        self.weights = []
        self.biases = []
        for i, shp in enumerate(shapes):
            fan_in = shp[0] * shp[1] * shp[2]
            bound = np.sqrt(6.0 / fan_in)
            self.weights.append(Tensor(rng.uniform(-bound, bound, shp).astype(dtype), requires_grad=True, name=f"conv{i}.weight"))
            self.biases.append(Tensor(np.zeros(shp[3], dtype=dtype), requires_grad=True, name=f"conv{i}.bias"))

    def __call__(self, x: Tensor) -> Tensor:
        n = len(self.weights)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = conv2d(x, w, b)
            if i < n - 1:
                x = ad.relu(x)
        return x

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"conv{i}.weight"] = w
            out[f"conv{i}.bias"] = b
        return out

    def state(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.parameters().items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for k, t in self.parameters().items():
            t.data = np.array(state[k], dtype=t.dtype)


def composite(subframes, cnn: WeightCnn | None, active: bool = True) -> tuple[Tensor, Tensor]:
    """Blend N sub-frames (N, H, W, 3) into one image.

    Returns the blurred image (H, W, 3) and the weights (N, H, W, 3). With
    ``active`` the weights are a softmax over the N axis of the CNN output
    for each frame (per pixel and channel); otherwise every frame gets 1/N.
    """
    if isinstance(subframes, (list, tuple)):
        shapes = {tuple(f.shape) for f in subframes}
        if len(shapes) != 1:
            raise ShapeError(f"composite: sub-frames differ in shape: {sorted(shapes)}")
        frames = ad.stack(list(subframes), axis=0)
    else:
        frames = ad.astensor(subframes)
    if frames.ndim != 4 or frames.shape[-1] != 3:
        raise ShapeError(f"composite: expected (N, H, W, 3) frames, got {frames.shape}")
    n = frames.shape[0]
    if active and cnn is not None:
        weights = ad.softmax(cnn(frames), axis=0)
    else:
        weights = Tensor(np.full(frames.shape, 1.0 / n, dtype=frames.dtype))
    blurred = ad.tsum(frames * weights, axis=0)
    return blurred, weights
