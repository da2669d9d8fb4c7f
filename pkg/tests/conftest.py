import numpy as np
import pytest

from repp_lab.maps import DoublyIntermittent, PiecewiseLinearMarkov, QuadraticMis
from repp_lab.measure import sample_invariant


@pytest.fixture(scope="session")
def quad():
    return QuadraticMis(2.0)


@pytest.fixture(scope="session")
def doubling():
    return PiecewiseLinearMarkov.doubling()


@pytest.fixture(scope="session")
def di():
    return DoublyIntermittent(0.25, 0.25)


@pytest.fixture(scope="session")
def quad_measure(quad):
    return sample_invariant(quad, 1_000_000, 10_000, seed=1)


@pytest.fixture(scope="session")
def doubling_measure(doubling):
    return sample_invariant(doubling, 100_000, 1_000, seed=1)


@pytest.fixture(scope="session")
def di_measure(di):
    return sample_invariant(di, 1_000_000, 10_000, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
