import os

import pytest
from hypothesis import HealthCheck, settings

from polymv import make_model

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

MODELS_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "models")


@pytest.fixture
def models_dir():
    return os.path.abspath(MODELS_DIR)


@pytest.fixture
def ou():
    """Constant-coefficient OU model: dZ = (0.5 - Z) dt + 0.5 dW."""
    return make_model(2, b="0.5", beta="-1", c="0.25", z0=1.0)


@pytest.fixture
def feedback():
    """gamma(x) = x2 with all other maps zero, started at 1 on R+."""
    return make_model(2, gamma="x2", z0=1.0, state_space="R+")


# -- acceptance summary: one PASS/FAIL line per criterion ---------------------------------

def pytest_configure(config):
    config._criteria = {}


@pytest.fixture
def detail(request):
    """Record a one-line measurement summary for the running criterion."""
    marker = request.node.get_closest_marker("criterion")

    def record(text):
        if marker is not None:
            entry = request.config._criteria.setdefault(marker.args[0], [None, ""])
            entry[1] = f"{entry[1]}; {text}" if entry[1] else text
            print(f"criterion {marker.args[0]}: {text}")
    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (rep.when != "call" and not rep.failed):
        return
    entry = item.config._criteria.setdefault(marker.args[0], [None, ""])
    entry[0] = rep.passed and entry[0] is not False


def pytest_terminal_summary(terminalreporter, config):
    crit = getattr(config, "_criteria", {})
    if not crit:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(crit):
        ok, text = crit[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {text}")
