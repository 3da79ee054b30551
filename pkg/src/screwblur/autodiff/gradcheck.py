"""Central finite differences against reverse-mode gradients."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad


def numerical_grad(fn: Callable[..., Tensor], arrays: Sequence[np.ndarray], which: int, eps: float = 1e-6) -> np.ndarray:
    base = [np.array(a, dtype=np.float64) for a in arrays]
    x = base[which]
    grad = np.zeros_like(x)
    with no_grad():
        for idx in np.ndindex(x.shape):
            orig = x[idx]
            x[idx] = orig + eps
            hi = fn(*[Tensor(a) for a in base]).item()
            x[idx] = orig - eps
            lo = fn(*[Tensor(a) for a in base]).item()
            x[idx] = orig
            grad[idx] = (hi - lo) / (2 * eps)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    denom = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)), floor)
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b))) / denom


def gradcheck(fn: Callable[..., Tensor], arrays: Sequence[np.ndarray], eps: float = 1e-6, floor: float = 1e-8) -> list[float]:
    """Relative error of the analytic gradient for each input of a scalar ``fn``.

    ``floor`` bounds the denominator so vanishing gradients compare absolutely.
    """
    inputs = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
    fn(*inputs).backward()
    errs = []
    for i, t in enumerate(inputs):
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        errs.append(relative_error(analytic, numerical_grad(fn, arrays, i, eps), floor))
    return errs
