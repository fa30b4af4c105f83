import dataclasses

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qdteleport.scenario import load_scenario, shipped_scenario_path

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# one line per acceptance criterion, echoed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def fiber_scenario():
    return load_scenario(shipped_scenario_path("reference-fiber"))


@pytest.fixture(scope="session")
def hybrid_scenario():
    return load_scenario(shipped_scenario_path("reference-hybrid"))


@pytest.fixture(scope="session")
def fiber_cfg(fiber_scenario):
    return fiber_scenario.config


@pytest.fixture
def short_cfg(fiber_cfg):
    """Fiber config trimmed to a couple of seconds per setting."""
    return dataclasses.replace(fiber_cfg, duration=2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
