import numpy as np
import pytest

from acidp.core import PriceGrid, make_price_grid
from acidp.universes import MultiUniverse, Universe


@pytest.fixture
def case_grid():
    return make_price_grid(0.01, 1.0, 20, 10)


def multiverse_from(p, q, prices):
    """Unfloored multiverse and grid from raw arrays."""
    mu = MultiUniverse([Universe(np.asarray(row)) for row in q], np.asarray(p), belief_floor=0.0)
    N = np.asarray(q).shape[2] - 1
    return mu, PriceGrid(tuple(float(a) for a in prices), N)


@pytest.fixture
def two_universe():
    """K=2, N=1, prices (1, 2); P(d=1) is (0.9, 0.2) in one universe and (0.1, 0.6) in the other."""
    q = [[[0.1, 0.9], [0.8, 0.2]], [[0.9, 0.1], [0.4, 0.6]]]
    return multiverse_from([0.5, 0.5], q, [1.0, 2.0])


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
