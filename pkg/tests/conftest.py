import numpy as np
import pytest

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    """Surface the one-line-per-criterion acceptance verdicts in the run
    summary regardless of output capturing."""
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

from illiquid.arrivals import IntensityProfile
from illiquid.dp import DPSolver, SolverConfig
from illiquid.market import MarketModel
from illiquid.utility import log_utility, power_utility

# shared base configuration: power gamma = 0.5, b = 0.05, c = 0.2,
# lam(t) = 1/(1-t) on T = 1, X0 = 1


@pytest.fixture(scope="session")
def std_utility():
    return power_utility(0.5)


@pytest.fixture(scope="session")
def std_model():
    return MarketModel.from_constants(1.0, 0.05, 0.2)


@pytest.fixture(scope="session")
def std_prof():
    return IntensityProfile(1.0)


@pytest.fixture(scope="session")
def fast_cfg():
    """Coarse but oracle-accurate solver settings for unit tests."""
    return SolverConfig(time_nodes=120, time_quad=48, return_quad=24)


@pytest.fixture(scope="session")
def std_solution(std_utility, std_model, std_prof, fast_cfg):
    solver = DPSolver(std_utility, std_model, std_prof, fast_cfg)
    return solver, solver.solve()


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
