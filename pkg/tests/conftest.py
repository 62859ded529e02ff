import numpy as np
import pytest

from aris.config import SystemConfig


@pytest.fixture
def small_config():
    """Short frame used by the integration-level tests."""
    return SystemConfig(n_slots=4)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(line)
