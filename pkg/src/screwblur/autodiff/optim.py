"""Adam with named parameter groups and per-group learning-rate schedules."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .tensor import Tensor


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, name: str):
        super().__init__(f"non-finite gradient in parameter {name!r}")
        self.param_name = name


@dataclass
class AdamState:
    step: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray | None],
    state: dict[str, AdamState],
    lr: float | Mapping[str, float],
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """Apply one Adam update in place.

    Parameters without a gradient (``None``) are left alone, including their
    moment estimates. All gradients are checked before anything is written, so
    a non-finite gradient aborts the whole step.
    """
    for name, g in grads.items():
        if g is not None and not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(name)
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {name!r} {p.shape}")
        st = state.setdefault(name, AdamState())
        if st.m is None:
            st.m = np.zeros_like(p)
            st.v = np.zeros_like(p)
        st.step += 1
        st.m *= beta1
        st.m += (1.0 - beta1) * g
        st.v *= beta2
        st.v += (1.0 - beta2) * (g * g)
        bc1 = 1.0 - beta1**st.step
        bc2 = 1.0 - beta2**st.step
        rate = lr[name] if isinstance(lr, Mapping) else lr
        p -= (rate / bc1) * st.m / (np.sqrt(st.v / bc2) + eps)


def exponential_decay(lr_init: float, lr_final: float, max_steps: int) -> Callable[[int], float]:
    """Log-linear interpolation from ``lr_init`` to ``lr_final`` over ``max_steps``."""

    def schedule(step: int) -> float:
        if lr_init == lr_final or max_steps <= 0:
            return lr_init
        t = min(max(step / max_steps, 0.0), 1.0)
        return math.exp((1.0 - t) * math.log(lr_init) + t * math.log(lr_final))

    return schedule


def constant(lr: float) -> Callable[[int], float]:
    return lambda step: lr


@dataclass
class ParamGroup:
    name: str
    params: dict[str, Tensor]
    schedule: Callable[[int], float]
    clip_norm: float | None = None


@dataclass
class Adam:
    groups: list[ParamGroup]
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    state: dict[str, AdamState] = field(default_factory=dict)

    def named_params(self) -> dict[str, Tensor]:
        out = {}
        for grp in self.groups:
            for k, t in grp.params.items():
                out[f"{grp.name}.{k}"] = t
        return out

    def zero_grad(self) -> None:
        for t in self.named_params().values():
            t.grad = None

    def step(self, iteration: int) -> dict[str, float]:
        """Update every group; returns the learning rate used per group."""
        params, grads, lrs = {}, {}, {}
        used = {}
        for grp in self.groups:
            rate = grp.schedule(iteration)
            used[grp.name] = rate
            gs = {k: t.grad for k, t in grp.params.items()}
            if grp.clip_norm is not None:
                present = [g for g in gs.values() if g is not None]
                if present:
                    norm = math.sqrt(sum(float(np.sum(g * g)) for g in present))
                    if norm > grp.clip_norm:
                        scale = grp.clip_norm / norm
                        gs = {k: (None if g is None else g * scale) for k, g in gs.items()}
            for k, t in grp.params.items():
                key = f"{grp.name}.{k}"
                params[key] = t.data
                grads[key] = gs[k]
                lrs[key] = rate
        adam_step(params, grads, self.state, lrs, self.beta1, self.beta2, self.eps)
        return used
