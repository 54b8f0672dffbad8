import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pwla import get_function, make_grid

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): acceptance criterion number and summary")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when != "call":
        return
    n, text = mark.args
    outcome = "PASS" if call.excinfo is None else "FAIL"
    _CRITERIA[n] = (outcome, text)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        outcome, text = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {outcome}  {text}")


@pytest.fixture(scope="session")
def grid():
    cache = {}

    def get(name, m=2000):
        if (name, m) not in cache:
            cache[name, m] = make_grid(get_function(name), m)
        return cache[name, m]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
