import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from benard_da.dynamics import PhysParams
from benard_da.field_core import Grid

settings.register_profile(
    "default",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")

# lines reported by the acceptance module, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def grid32():
    return Grid(nx=32, ny=32)


@pytest.fixture(scope="session")
def grid64():
    return Grid(nx=64, ny=64)


@pytest.fixture(scope="session")
def phys():
    return PhysParams()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
