import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from secondclass.oracles.ctmc import Window, ctmc_build, ctmc_pmf
from secondclass.qcalc import RateParams

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def ctmc_step_06():
    """Two-class chain, window [-6,6], p=0.3, t=0.5 (shared by several modules)."""
    P = RateParams(0.3)
    return ctmc_pmf(ctmc_build(P, Window(-6, 6)), 0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
