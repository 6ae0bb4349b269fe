import numpy as np
import pytest

from bcsim.config import calibrate, load_config
from bcsim.engine import CostParams, SimulationConfig
from bcsim.model import DEFAULT_INCIDENCE_BY_DECADE, TransitionParams
from bcsim.calibration import calibrate_healing
from bcsim.population import build_initial_cohort


@pytest.fixture(scope="session")
def inputs():
    return load_config()


@pytest.fixture(scope="session")
def params(inputs):
    return calibrate(inputs)[0]


@pytest.fixture(scope="session")
def costs():
    return CostParams()


@pytest.fixture(scope="session")
def flat_params():
    """Calibrated parameters with a flat 1% annual background mortality table."""
    table = {age: 0.01 for age in range(0, 120)}
    return calibrate_healing(TransitionParams(DEFAULT_INCIDENCE_BY_DECADE, table))


@pytest.fixture(scope="session")
def small_config():
    return SimulationConfig(replications=5, population_fraction=0.001, scale_factor=1000.0, base_seed=7)


@pytest.fixture(scope="session")
def small_cohort(inputs, small_config):
    return build_initial_cohort(inputs.ages, inputs.disease, small_config.population_fraction, [small_config.base_seed, 1])


ACCEPTANCE_LOG = []


def record(criterion, passed, detail):
    """Register one acceptance criterion outcome for the end-of-run summary."""
    line = f"[criterion {criterion}] {'PASS' if passed else 'FAIL'}: {detail}"
    ACCEPTANCE_LOG.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LOG:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LOG:
            terminalreporter.write_line(line)
