import os

import pytest
from hypothesis import HealthCheck, settings

from ubmlab.ubm_sim import SimConfig, simulate_ensemble

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


# Shared fixed-seed ensembles (particle mode, beta = 2).  Session scoped so
# the unit tests and the acceptance suite simulate each only once.

@pytest.fixture(scope="session")
def ensemble_256():
    return simulate_ensemble(SimConfig(N=256, t_final=1.0, mode="particles", seed=256), 200)


@pytest.fixture(scope="session")
def ensemble_512():
    return simulate_ensemble(SimConfig(N=512, t_final=1.0, mode="particles", seed=512), 200)


@pytest.fixture(scope="session")
def ensemble_1024():
    cfg = SimConfig(N=1024, t_final=3.85, mode="particles", seed=1024,
                    snapshots=(3.5, 3.7, 3.8))
    return simulate_ensemble(cfg, 100)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
