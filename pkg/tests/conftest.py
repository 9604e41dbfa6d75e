import numpy as np
import pytest

from freshcache.domain import DemandSpec, ItemCatalog, ScenarioConfig


@pytest.fixture
def single_item():
    # b=1, p=1, lambda=20 with beta=0.005 gives beta*p = 0.005
    return ItemCatalog(np.array([1.0]), np.array([1.0]), np.array([20.0]))


@pytest.fixture
def two_items():
    return ItemCatalog(np.array([1.0, 1.0]), np.array([0.8, 0.2]), np.array([20.0, 20.0]))


@pytest.fixture
def small_zipf_config():
    cat = ItemCatalog.zipf(10, 1.0, size=10.0, refresh_rate=20.0)
    return ScenarioConfig(cat, DemandSpec(0.1), horizon_seconds=2e5, seed=3)


_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_log():
    """Lines of the form ``criterion N: PASS|FAIL ...``, echoed in the terminal summary."""
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
