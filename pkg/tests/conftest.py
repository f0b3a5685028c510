import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tempvis.geometry import reference_display

settings.register_profile("ci", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def geom():
    return reference_display()


@pytest.fixture(scope="session")
def small_geom(geom):
    return geom.cropped(142, 142)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
