"""Differentiable initial-value solvers for latent dynamics.

All stage evaluations are ordinary tensor operations, so gradients reach the
initial state and the derivative network's parameters by differentiating the
steps that were actually taken. Step-size decisions are made on raw arrays and
are constants as far as the backward pass is concerned.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .autodiff import Tensor, custom, no_grad

OdeFunc = Callable[[Tensor, float], Tensor]

METHODS = ("euler", "rk4", "dopri5")

# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B5 = _A[6] + (0.0,)
_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)
_E = tuple(b5 - b4 for b5, b4 in zip(_B5, _B4))
# continuous extension (Hairer & Wanner dense output, order 4)
_D = (
    -12715105075 / 11282082432,
    0.0,
    87487479700 / 32700410799,
    -10690763975 / 1880347072,
    701980252875 / 199316789632,
    -1453857185 / 822651844,
    69997945 / 29380423,
)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0


class IntegrationError(RuntimeError):
    def __init__(self, message: str, last_time: float):
        super().__init__(f"{message} (reached t={last_time:.6g})")
        self.last_time = last_time


@dataclass
class SolverConfig:
    method: str = "dopri5"
    rtol: float = 1e-3
    atol: float = 1e-6
    max_steps: int = 1000
    initial_step: float | None = None
    # a positive value runs dopri5 with fixed steps (no error control)
    fixed_step: float | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown solver method {self.method!r}; choose from {METHODS}")
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("rtol and atol must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


def lincomb(terms: Sequence[tuple[float, Tensor]]) -> Tensor:
    """Fused ``sum(c_i * x_i)`` over same-shaped tensors."""
    terms = [(c, x) for c, x in terms if c != 0.0]
    out = terms[0][1].data * terms[0][0]
    for c, x in terms[1:]:
        out = out + c * x.data
    coefs = [c for c, _ in terms]
    return custom(out, [x for _, x in terms], lambda g: tuple(c * g for c in coefs))


def _rms_norm(err: np.ndarray, y0: np.ndarray, y1: np.ndarray, rtol: float, atol: float) -> float:
    scale = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def _euler_step(func: OdeFunc, y: Tensor, t: float, h: float) -> Tensor:
    return lincomb([(1.0, y), (h, func(y, t))])


def _rk4_step(func: OdeFunc, y: Tensor, t: float, h: float) -> Tensor:
    k1 = func(y, t)
    k2 = func(lincomb([(1.0, y), (h / 2, k1)]), t + h / 2)
    k3 = func(lincomb([(1.0, y), (h / 2, k2)]), t + h / 2)
    k4 = func(lincomb([(1.0, y), (h, k3)]), t + h)
    return lincomb([(1.0, y), (h / 6, k1), (h / 3, k2), (h / 3, k3), (h / 6, k4)])


def _dopri_stages(func: OdeFunc, y: Tensor, t: float, h: float, k1: Tensor) -> tuple[list[Tensor], Tensor]:
    ks = [k1]
    for i in range(1, 6):
        yi = lincomb([(1.0, y)] + [(h * a, k) for a, k in zip(_A[i], ks)])
        ks.append(func(yi, t + _C[i] * h))
    y5 = lincomb([(1.0, y)] + [(h * b, k) for b, k in zip(_B5, ks)])
    ks.append(func(y5, t + h))
    return ks, y5


def _dense(y0: Tensor, y1: Tensor, ks: list[Tensor], h: float, theta: float) -> Tensor:
    # y0 + th*(dy + (1-th)*(bspl + th*(r4 + (1-th)*r5))), written out as one linear combination:
    #   bspl = h k1 - dy,  r4 = dy - h k7 - bspl,  r5 = h * sum(d_i k_i)
    s = 1.0 - theta
    c_dy = theta * (1.0 - s + s * theta * 2.0)
    c_k1 = theta * s * (h - theta * h)
    c_k7 = -theta * s * theta * h
    c_r5 = theta * s * theta * s * h
    terms = [(1.0 - c_dy, y0), (c_dy, y1), (c_k1, ks[0]), (c_k7, ks[6])]
    terms += [(c_r5 * d, k) for d, k in zip(_D, ks) if d != 0.0]
    merged: dict[int, list] = {}
    for c, x in terms:
        if id(x) in merged:
            merged[id(x)][0] += c
        else:
            merged[id(x)] = [c, x]
    return lincomb([(c, x) for c, x in merged.values()])


def _check_times(t0: float, ts: Sequence[float]) -> list[float]:
    ts = [float(t) for t in ts]
    if not ts:
        raise ValueError("no output times requested")
    if ts[0] < t0:
        raise ValueError(f"first output time {ts[0]} precedes t0={t0}")
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise ValueError("output times must be strictly increasing")
    return ts


def _solve_fixed(z0: Tensor, func: OdeFunc, t0: float, ts: list[float], h: float, step) -> list[Tensor]:
    out = []
    y, t = z0, t0
    for target in ts:
        span = target - t
        if span > 0:
            n = max(1, math.ceil(span / h - 1e-9))
            dt = span / n
            for i in range(n):
                y = step(func, y, t + i * dt, dt)
            t = target
        out.append(y)
    return out


def _dopri_fixed_step(func: OdeFunc, y: Tensor, t: float, h: float) -> Tensor:
    _, y5 = _dopri_stages(func, y, t, h, func(y, t))
    return y5


def ode_solve(
    z0: Tensor,
    func: OdeFunc,
    t0: float,
    ts: Sequence[float],
    cfg: SolverConfig | None = None,
) -> list[Tensor]:
    """Integrate ``dz/dt = func(z, t)`` from ``t0`` and return ``z`` at each of ``ts``.

    Fixed-step methods split every gap between consecutive output times into
    equal steps no longer than the configured step. The adaptive method uses
    the embedded 5(4) error estimate with a mixed absolute/relative tolerance
    and reads requested times off the continuous extension of each accepted
    step, so a single pass serves every output time.
    """
    cfg = cfg or SolverConfig()
    ts = _check_times(t0, ts)
    t_end = ts[-1]
    if cfg.method == "euler" or cfg.method == "rk4":
        h = cfg.initial_step or (t_end - t0) / 50 or 1.0
        step = _euler_step if cfg.method == "euler" else _rk4_step
        return _solve_fixed(z0, func, t0, ts, h, step)
    if cfg.fixed_step:
        return _solve_fixed(z0, func, t0, ts, cfg.fixed_step, _dopri_fixed_step)
    return _solve_dopri5(z0, func, t0, ts, cfg)


def _solve_dopri5(z0: Tensor, func: OdeFunc, t0: float, ts: list[float], cfg: SolverConfig) -> list[Tensor]:
    out: list[Tensor] = []
    pending = list(ts)
    while pending and pending[0] == t0:
        out.append(z0)
        pending.pop(0)
    if not pending:
        return out
    t_end = pending[-1]
    h = cfg.initial_step or (t_end - t0) / 50
    t, y = t0, z0
    k1 = func(y, t)
    attempts = 0
    while pending:
        if attempts >= cfg.max_steps:
            raise IntegrationError(f"exceeded max_steps={cfg.max_steps}", t)
        attempts += 1
        h = min(h, t_end - t)
        ks, y5 = _dopri_stages(func, y, t, h, k1)
        err = h * sum(e * k.data for e, k in zip(_E, ks) if e != 0.0)
        err_norm = _rms_norm(err, y.data, y5.data, cfg.rtol, cfg.atol)
        if not math.isfinite(err_norm):
            raise IntegrationError("non-finite state", t)
        if err_norm <= 1.0:
            t_new = t + h
            if t_end - t_new <= 1e-12 * max(1.0, abs(t_end)):
                t_new = t_end
            while pending and pending[0] <= t_new:
                target = pending.pop(0)
                if target == t_new:
                    out.append(y5)
                else:
                    out.append(_dense(y, y5, ks, h, (target - t) / h))
            t, y, k1 = t_new, y5, ks[6]
        factor = _MAX_FACTOR if err_norm == 0.0 else _SAFETY * err_norm ** -0.2
        h *= min(_MAX_FACTOR, max(_MIN_FACTOR, factor))
    return out


def convergence_probe(
    func: OdeFunc,
    z0,
    t1: float,
    method: str,
    exact,
    h0: float = 0.1,
    halvings: int = 5,
) -> list[tuple[float, float]]:
    """Global error at ``t1`` for a sequence of halved fixed step sizes.

    ``method='dopri5'`` runs the fifth-order solution with a fixed step.
    Returns ``[(h, max_abs_error), ...]``.
    """
    exact = np.asarray(exact, dtype=float)
    rows = []
    with no_grad():
        for i in range(halvings + 1):
            h = h0 / 2**i
            if method == "dopri5":
                cfg = SolverConfig("dopri5", fixed_step=h)
            else:
                cfg = SolverConfig(method, initial_step=h)
            (z,) = ode_solve(Tensor(np.asarray(z0, dtype=float)), func, 0.0, [t1], cfg)
            rows.append((h, float(np.max(np.abs(z.data - exact)))))
    return rows


def observed_order(rows: Sequence[tuple[float, float]]) -> float:
    """Least-squares slope of log(error) against log(step)."""
    hs = np.log([h for h, _ in rows])
    es = np.log([e for _, e in rows])
    return float(np.polyfit(hs, es, 1)[0])
