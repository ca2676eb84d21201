import math
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

from csilab.scene import SPEED_OF_LIGHT, ArrayGeometry, Scatterer, Scene, Site, User  # noqa: E402


@pytest.fixture
def two_site_scene():
    sites = (
        Site("mbs", (0.0, 0.0), ArrayGeometry(16, 0.5, math.pi / 2), SPEED_OF_LIGHT / 3.5e9),
        Site("sbs", (100.0, 300.0), ArrayGeometry(8, 0.5, -math.pi / 2), SPEED_OF_LIGHT / 28e9),
    )
    return Scene(sites, (Scatterer((60.0, 180.0), 0.4 + 0.2j), Scatterer((140.0, 220.0), -0.3)),
                 (User("u0", (90.0, 200.0), (1.0, 0.0)),), rng_seed=1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


@pytest.fixture
def criterion(request):
    """Record one pass/fail line for an acceptance criterion; printed in the terminal summary."""
    lines = request.config.stash[ACCEPTANCE_KEY]

    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(line)
        lines.append((number, line))
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
