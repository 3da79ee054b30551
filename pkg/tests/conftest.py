import numpy as np
import pytest

from screwblur.liegroup import look_at
from screwblur.splat import GaussianScene, Intrinsics


def small_scene(n=6, seed=0, dtype=np.float64, requires_grad=True):
    rng = np.random.default_rng(seed)
    means = rng.uniform(-0.3, 0.3, (n, 3))
    quats = rng.normal(size=(n, 4))
    scales = rng.uniform(0.05, 0.15, (n, 3))
    opac = rng.uniform(0.4, 0.9, n)
    colors = rng.uniform(0.1, 0.9, (n, 3))
    return GaussianScene.from_arrays(
        means, quats, scales, opac, colors, background=(0.1, 0.2, 0.3), dtype=dtype, requires_grad=requires_grad
    )


@pytest.fixture
def scene():
    return small_scene()


@pytest.fixture
def intr():
    return Intrinsics.centered(20.0, 16, 16)


@pytest.fixture
def pose():
    return look_at([0.2, 0.1, -2.0], [0.0, 0.0, 0.0])


# -- acceptance report ------------------------------------------------------
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one pass/fail line for the acceptance summary and echo it."""

    def emit(name: str, passed: bool, detail: str) -> bool:
        line = f"{'PASS' if passed else 'FAIL'}  criterion {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
