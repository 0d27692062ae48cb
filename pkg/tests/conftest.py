import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def z2():
    from geopressure.mapcore import MapSpec
    return MapSpec.unicritical(2, 0)


@pytest.fixture
def basilica():
    from geopressure.mapcore import MapSpec
    return MapSpec.unicritical(2, -1)


def pytest_configure(config):
    config._acceptance = []


@pytest.fixture
def acceptance(request):
    """record(k, ok, detail): log one acceptance line, then assert it."""
    log = request.config._acceptance

    def record(k, ok, detail):
        line = f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}"
        log.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    if config._acceptance:
        terminalreporter.section("acceptance criteria")
        for line in sorted(config._acceptance, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
