import numpy as np
import pytest

from fpprop.coefficients import CoefficientSet, from_fpe
from fpprop.randomized import ou_fpe


def simpson(f, a, b, n=2000, breaks=()):
    """Composite Simpson rule, restarted at ``breaks``; brute-force oracle."""
    edges = [a, *sorted(x for x in breaks if a < x < b), b]
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        s = np.linspace(lo, hi, 2 * n + 1)
        y = np.asarray([f(v) for v in s], dtype=float)
        h = (hi - lo) / (2 * n)
        total = total + h / 3 * (y[0] + y[-1] + 4 * y[1:-1:2].sum(axis=0) + 2 * y[2:-1:2].sum(axis=0))
    return total


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


@pytest.fixture
def ou():
    """1-D OU in general form: a1 = a3 = 1, a4 = 1."""
    return from_fpe(ou_fpe(1))


@pytest.fixture
def heat():
    return CoefficientSet(1, 0.0, [0.0], 0.0, 1.0)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
