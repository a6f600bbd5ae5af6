"""Shared fixtures: expensive trajectories are built once per session."""

import numpy as np
import pytest

from syzygylab import (MassTriple, PropagationOptions, propagate,
                       sample_initial_conditions)
from syzygylab.propagate import hierarchical_state, lagrange_homothety

# registry filled by tests/test_acceptance.py, printed at the end of the run
ACCEPTANCE_RESULTS = []


def record_acceptance(criterion: str, passed: bool, detail: str = ""):
    ACCEPTANCE_RESULTS.append((criterion, passed, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for criterion, passed, detail in ACCEPTANCE_RESULTS:
        word = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{word}] {criterion}: {detail}")


@pytest.fixture(scope="session")
def masses_equal():
    return MassTriple(1.0, 1.0, 1.0)


@pytest.fixture(scope="session")
def masses_unequal():
    return MassTriple(0.7, 1.9, 3.1)


@pytest.fixture(scope="session")
def traj_lagrange(masses_equal):
    state = lagrange_homothety(masses_equal, -1.0)
    return propagate(state, masses_equal, PropagationOptions(horizon=50.0))


@pytest.fixture(scope="session")
def traj_escape(masses_equal):
    """Hierarchical escape with H = -1 and J = 0; reaches rho ~ 260."""
    state = hierarchical_state(masses_equal, pair_sep=0.2, rho=3.0,
                               total_energy=-1.0, zero_total_j=True)
    opts = PropagationOptions(rel_tol=1e-10, abs_tol=1e-12, horizon=120.0,
                              escape_check=False)
    return propagate(state, masses_equal, opts)


@pytest.fixture(scope="session")
def traj_conservation(masses_equal):
    """Smooth hierarchical run with a circular outer body, 100 time units."""
    state = hierarchical_state(masses_equal, pair_sep=1.0, rho=12.0,
                               outer_mode="circular")
    opts = PropagationOptions(horizon=100.0, escape_check=False)
    return propagate(state, masses_equal, opts)


@pytest.fixture(scope="session")
def traj_near_parabolic(masses_equal):
    """Outer body ejected almost parabolically; returns inside the horizon."""
    state = hierarchical_state(masses_equal, pair_sep=0.15, rho=2.5,
                               outer_energy=-0.25, zero_total_j=True)
    opts = PropagationOptions(rel_tol=1e-10, abs_tol=1e-12, horizon=26.0,
                              escape_check=False)
    return propagate(state, masses_equal, opts)


@pytest.fixture(scope="session")
def zero_j_trajectories(masses_equal):
    """Ten seeded zero-J, H = -1 runs at default tolerances."""
    out = []
    for seed in range(10):
        state = sample_initial_conditions(seed, masses_equal, -1.0)
        out.append(propagate(state, masses_equal,
                             PropagationOptions(horizon=30.0)))
    return out


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260808)
