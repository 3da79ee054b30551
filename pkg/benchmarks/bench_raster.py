"""Compare the compiled and pure-numpy rasterizer backends.

    python benchmarks/bench_raster.py [--gaussians 200] [--size 96] [--repeat 5]

Times forward and forward+backward for each available backend on a random
scene and reports the speedup plus the max absolute difference between the
two backends' outputs.
"""
import argparse
import time

import numpy as np

from screwblur.liegroup import look_at
from screwblur.splat import GaussianScene, Intrinsics, project, raster


def make_inputs(n: int, size: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    scene = GaussianScene.from_arrays(
        rng.uniform(-0.5, 0.5, (n, 3)),
        rng.normal(size=(n, 4)),
        rng.uniform(0.01, 0.06, (n, 3)),
        rng.uniform(0.3, 0.95, n),
        rng.uniform(0.0, 1.0, (n, 3)),
    )
    intr = Intrinsics.centered(1.1 * size, size, size)
    proj = project(scene, look_at([0.2, 0.1, -2.0], [0.0, 0.0, 0.0]), intr)
    order = np.argsort(proj.depths, kind="stable")
    args = (
        np.ascontiguousarray(proj.means2d.data[order]),
        np.ascontiguousarray(proj.conics.data[order]),
        np.ascontiguousarray(proj.opacities.data[order]),
        np.ascontiguousarray(scene.colors_rgb()[order], dtype=float),
        np.ascontiguousarray(proj.radii[order], dtype=float),
        np.zeros(3),
        size,
        size,
    )
    grad = rng.normal(size=(size, size, 3))
    return args, grad


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--gaussians", type=int, default=200)
    p.add_argument("--size", type=int, default=96)
    p.add_argument("--repeat", type=int, default=5)
    a = p.parse_args(argv)

    args, grad = make_inputs(a.gaussians, a.size)
    results = {}
    for name, impl in sorted(raster.BACKENDS.items()):
        fwd = best_of(lambda: impl.forward(*args), a.repeat)
        both = best_of(lambda: (impl.forward(*args), impl.backward(*args, grad)), a.repeat)
        results[name] = (fwd, both, impl.forward(*args)[0], impl.backward(*args, grad))
        print(f"{name:>9}: forward {fwd * 1e3:8.2f} ms   forward+backward {both * 1e3:8.2f} ms")

    if len(results) == 2:
        py, cc = results["python"], results["compiled"]
        img_diff = float(np.abs(py[2] - cc[2]).max())
        grad_diff = max(float(np.abs(g1 - g2).max()) for g1, g2 in zip(py[3], cc[3]))
        print(f"speedup  : forward {py[0] / cc[0]:.1f}x   forward+backward {py[1] / cc[1]:.1f}x")
        print(f"max |diff|: image {img_diff:.2e}   grads {grad_diff:.2e}")
    else:
        print("compiled backend not built; only the numpy fallback was timed")


if __name__ == "__main__":
    main()
