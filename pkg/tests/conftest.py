import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default",
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

_ACCEPTANCE = {}
_NOTES = []


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance(number, title): implements a numbered acceptance criterion")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def acceptance_note():
    """Record a measurement line for the acceptance summary."""
    return _NOTES.append


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        # a criterion spread over several tests passes only if all of them pass
        _, passed, total = _ACCEPTANCE.get(number, (title, 0, 0))
        _ACCEPTANCE[number] = (title, passed + (report.outcome == "passed"), total + 1)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, passed, total = _ACCEPTANCE[number]
        verdict = "PASS" if passed == total else "FAIL"
        terminalreporter.write_line(
            f"{verdict}  criterion {number:2d}: {title} ({passed}/{total} checks)")
    for note in _NOTES:
        terminalreporter.write_line(f"      {note}")
