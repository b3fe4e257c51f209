import math

import numpy as np
import pytest

from fuzzy_euler.kernels import KernelFamily
from fuzzy_euler.spectral import GridSpec


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def grid1d():
    return GridSpec(1, 64, 2 * math.pi)


@pytest.fixture
def grid2d():
    return GridSpec(2, 32, 2 * math.pi)


@pytest.fixture
def wide_grid():
    """Torus of side 8 pi: the unit-scale dynamics fit well inside it."""
    return GridSpec(1, 256, 8 * math.pi)


@pytest.fixture
def bessel():
    return KernelFamily.default(1, 0.1)


def pytest_terminal_summary(terminalreporter):
    """One pass/fail line per acceptance criterion, when any of them ran."""
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        title, ok, detail = results[n]
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
