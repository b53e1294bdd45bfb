import math

import numpy as np
import pytest

from apriori_lab.solvers import SimConfig, run

ACCEPTANCE_LINES: list[str] = []

# Reference desk-scale runs shared by the solver and acceptance tests.
QG_REFERENCE = SimConfig(
    system="qg",
    n=256,
    t_end=1.0,
    dt=2.5e-3,
    stride=2,
    preset="qg_orthogonal",
    norms=((0, 2.0), (0, 3.0), (0, 4.0), (0, math.inf), (3, 2.0), (3, 4.0)),
    besov=True,
)
NS_REFERENCE = SimConfig(
    system="ns",
    n=64,
    t_end=0.5,
    dt=5e-3,
    nu=1e-2,
    stride=2,
    preset="taylor_green",
    norms=((3, 2.0),),
)


@pytest.fixture(scope="session")
def qg_reference():
    return run(QG_REFERENCE)


@pytest.fixture(scope="session")
def ns_reference():
    return run(NS_REFERENCE)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
