"""Shared fixtures.

The solved quantum exponentials are the expensive part of the suite (a few
seconds per start), so they and everything built on them are session
scoped.
"""
import time

import numpy as np
import pytest

from qazb.calibration import load_calibration
from qazb.lattice import make_lattice
from qazb.multunitary import build_W
from qazb.qexp import SolverOptions, constant_qexp, make_sr_pair, solve
from qazb.schrodinger import canonical_pair


ACCEPTANCE_LINES = []
SESSION_START = [time.perf_counter()]


def pytest_sessionstart(session):
    SESSION_START[0] = time.perf_counter()


def pytest_collection_modifyitems(session, config, items):
    # acceptance last, so its wall-time criterion sees the whole run
    items.sort(key=lambda it: it.module.__name__.endswith("test_acceptance"))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def p62():
    return make_lattice(6, 2)


@pytest.fixture(scope="session")
def pair62(p62):
    return canonical_pair(p62)


@pytest.fixture(scope="session")
def sr62(pair62):
    return make_sr_pair(pair62)


@pytest.fixture(scope="session")
def cal():
    return load_calibration()


@pytest.fixture(scope="session")
def F1(p62):
    return solve(p62, SolverOptions(seed=1))


@pytest.fixture(scope="session")
def F2(p62):
    return solve(p62, SolverOptions(seed=2))


@pytest.fixture(scope="session")
def W62(pair62, F1):
    return build_W(pair62, F1, surrogate=True)


@pytest.fixture(scope="session")
def W0(pair62, p62):
    return build_W(pair62, constant_qexp(p62), surrogate=True)


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


def random_normal(n, rng, scale=1.0):
    """Random normal matrix ``U diag(w) U*`` with Gaussian complex spectrum."""
    from scipy.stats import unitary_group

    U = unitary_group.rvs(n, random_state=rng)
    w = scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return (U * w) @ U.conj().T
