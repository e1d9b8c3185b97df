import sys

import numpy as np
import pytest

from becvortex import GridSpec, SolverParams, StationaryStates


@pytest.fixture(scope="session")
def grid():
    return GridSpec(8.0, 256)


@pytest.fixture(scope="session")
def small_grid():
    return GridSpec(8.0, 64)


def gaussian(X, Y):
    return np.exp(-(X**2 + Y**2) / 2) / np.sqrt(np.pi)


@pytest.fixture(scope="session")
def states_small():
    """Stationary states on a coarse grid, shared by the solver tests."""
    out = {}

    def get(beta):
        if beta not in out:
            p = SolverParams(beta=beta, grid=GridSpec(8.0, 64))
            out[beta] = StationaryStates.compute(p)
        return out[beta]

    return get


def pytest_terminal_summary(terminalreporter):
    mod = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
