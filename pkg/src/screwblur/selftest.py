"""Quick property suites runnable from the command line.

Each check returns ``(name, passed, detail)``; :func:`run_all` prints one line
per check.
"""
from __future__ import annotations

import time

import numpy as np

from . import autodiff as ad
from . import liegroup as lg
from .autodiff import Tensor
from .autodiff.gradcheck import gradcheck
from .ode import convergence_probe, observed_order


def series_exp(m: np.ndarray, terms: int = 80) -> np.ndarray:
    """Truncated power series of the matrix exponential, batched over leading axes."""
    out = np.broadcast_to(np.eye(m.shape[-1]), m.shape).copy()
    term = out.copy()
    for k in range(1, terms):
        term = term @ m / k
        out += term
    return out


def random_screws(rng: np.random.Generator, n: int) -> list[lg.ScrewAxis]:
    axes = rng.normal(size=(n, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    angles = rng.uniform(-np.pi, np.pi, n)
    trans = rng.normal(size=(n, 3))
    return [lg.ScrewAxis(a, float(t), v) for a, t, v in zip(axes, angles, trans)]


def check_liegroup(n: int = 10_000, seed: int = 0) -> list[tuple[str, bool, str]]:
    rng = np.random.default_rng(seed)
    screws = random_screws(rng, n)
    closed = np.stack([lg.exp_se3(s).matrix() for s in screws])
    oracle = series_exp(np.stack([lg.twist_matrix(s) * s.angle for s in screws]))
    err = float(np.abs(closed - oracle).max())
    rots = closed[:, :3, :3]
    ortho = float(np.abs(rots @ rots.transpose(0, 2, 1) - np.eye(3)).max())
    det = float(np.abs(np.linalg.det(rots) - 1.0).max())
    rt = 0.0
    for s in screws:
        axis, angle = lg.log_so3(lg.exp_so3(s.axis, s.angle))
        rt = max(rt, float(np.abs(axis * angle - s.axis * s.angle).max()))
    return [
        ("liegroup: exp_se3 vs series", err < 1e-8, f"max error {err:.2e}"),
        ("liegroup: orthogonality", ortho < 1e-9, f"max residual {ortho:.2e}"),
        ("liegroup: determinant", det < 1e-9, f"max residual {det:.2e}"),
        ("liegroup: log o exp", rt < 1e-8, f"max error {rt:.2e}"),
    ]


def _linear(z, t):
    return z


def check_ode() -> list[tuple[str, bool, str]]:
    out = []
    for method, target, tol in (("euler", 1.0, 0.2), ("rk4", 4.0, 0.5)):
        p = observed_order(convergence_probe(_linear, [1.0], 1.0, method, [np.e], h0=0.1, halvings=5))
        out.append((f"ode: {method} order", abs(p - target) <= tol, f"slope {p:.3f}"))
    from .ode import SolverConfig, ode_solve

    a = np.array([[-0.5, 1.0], [-1.0, -0.5]])
    z0 = np.array([1.0, 0.5])
    with ad.no_grad():
        (z,) = ode_solve(Tensor(z0), lambda z, t: z @ a.T, 0.0, [1.0], SolverConfig("dopri5", rtol=1e-6, atol=1e-9))
    err = float(np.abs(z.data - series_exp(a) @ z0).max())
    out.append(("ode: dopri5 vs exp(A) z0", err < 1e-6, f"max error {err:.2e}"))
    return out


def primitive_cases(seed: int = 0) -> dict:
    """One scalar test function per autodiff primitive, with its inputs."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(3, 4))
    y = rng.normal(size=(4, 2))
    row = rng.normal(size=(4,))
    pos = rng.uniform(0.5, 2.0, size=(3, 4))
    # kinks of relu/abs kept away from the probes
    away = np.where(np.abs(x) < 0.1, 0.5, x)
    mask = x > 0
    batch_a = rng.normal(size=(2, 3, 3))
    batch_b = rng.normal(size=(3, 2))
    swap_w = rng.normal(size=(3, 3, 2))
    return {
        "add": (lambda a, b: ad.tsum(ad.sin(a + b)), [x, row]),
        "sub": (lambda a, b: ad.tsum(ad.sin(a - b)), [x, row]),
        "mul": (lambda a, b: ad.tsum(a * b * a), [x, row]),
        "div": (lambda a, b: ad.tsum(a / (b + 3.0)), [x, pos]),
        "neg": (lambda a: ad.tsum(ad.sin(-a)), [x]),
        "where": (lambda a, b: ad.tsum(ad.square(ad.where(mask, a, b))), [x, row]),
        "matmul": (lambda a, b: ad.tsum(ad.sin(a @ b)), [x, y]),
        "matmul batched": (lambda a, b: ad.tsum(ad.sin(a @ b)), [batch_a, batch_b]),
        "matmul vector": (lambda a, b: ad.tsum(ad.sin(a @ b)), [x, row]),
        "relu": (lambda a: ad.tsum(ad.square(ad.relu(a))), [away]),
        "sigmoid": (lambda a: ad.tsum(ad.sigmoid(a) * a), [x]),
        "exp": (lambda a: ad.tsum(ad.exp(a * 0.3)), [x]),
        "log": (lambda a: ad.tsum(ad.log(a) * a), [pos]),
        "sin": (lambda a: ad.tsum(ad.sin(a) * a), [x]),
        "cos": (lambda a: ad.tsum(ad.cos(a) * a), [x]),
        "square": (lambda a: ad.tsum(ad.square(a) * a), [x]),
        "sqrt": (lambda a: ad.tsum(ad.sqrt(a) * a), [pos]),
        "abs": (lambda a: ad.tsum(ad.tabs(a) * a), [away]),
        "sum": (lambda a: ad.tsum(ad.square(ad.tsum(a, axis=0, keepdims=True))), [x]),
        "mean": (lambda a: ad.tsum(ad.square(ad.mean(a, axis=1))), [x]),
        "softmax": (lambda a: ad.tsum(ad.softmax(a, axis=0) * ad.cos(a)), [x]),
        "reshape": (lambda a: ad.tsum(ad.sin(ad.reshape(a, (4, 3)) @ a)), [x]),
        "transpose": (lambda a: ad.tsum(ad.sin(ad.transpose(a) @ a)), [x]),
        "swapaxes": (lambda a: ad.tsum(ad.sin(ad.swapaxes(a, 0, 2)) * swap_w), [batch_a]),
        "broadcast_to": (lambda a: ad.tsum(ad.sin(ad.broadcast_to(a, (3, 4))) * x), [row]),
        "getitem": (lambda a: ad.tsum(ad.square(a[1:, ::2])), [x]),
        "getitem fancy": (lambda a: ad.tsum(ad.square(a[[0, 2, 0]])), [x]),
        "concat": (lambda a, b: ad.tsum(ad.square(ad.concat([a, b], axis=0))), [x, pos]),
        "stack": (lambda a, b: ad.tsum(ad.sin(ad.stack([a, b], axis=1))), [x, pos]),
        "conv2d": (
            lambda a, w, b: ad.tsum(ad.square(ad.conv2d(a, w, b))),
            [rng.normal(size=(2, 4, 5, 2)), rng.normal(size=(3, 3, 2, 3)), rng.normal(size=3)],
        ),
        "conv2d wide": (
            lambda a, w: ad.tsum(ad.square(ad.conv2d(a, w))),
            [rng.normal(size=(1, 5, 4, 6)), rng.normal(size=(3, 3, 6, 6))],
        ),
        "conv2d narrow out": (
            lambda a, w: ad.tsum(ad.square(ad.conv2d(a, w))),
            [rng.normal(size=(1, 4, 4, 8)), rng.normal(size=(3, 3, 8, 2))],
        ),
    }


def check_autodiff(seed: int = 0) -> list[tuple[str, bool, str]]:
    out = []
    for name, (fn, arrays) in primitive_cases(seed).items():
        err = max(gradcheck(fn, arrays))
        out.append((f"autodiff: {name}", err < 1e-3, f"relative error {err:.2e}"))
    return out


def run_all(printer=print) -> bool:
    ok = True
    for suite in (check_liegroup, check_ode, check_autodiff):
        t0 = time.perf_counter()
        results = suite()
        dt = time.perf_counter() - t0
        for name, passed, detail in results:
            ok &= passed
            printer(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
        printer(f"      ({suite.__name__} took {dt:.2f}s)")
    return ok
