"""Shared test configuration.

Acceptance tests carry ``@pytest.mark.criterion(n)``. Their outcome plus any
detail text they record is printed as one ``criterion n: PASS|FAIL`` line per
criterion in the terminal summary.
"""

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=100,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_RESULTS = {}
_DETAILS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.fixture
def detail(request):
    """Callable that attaches a short result note to the test's criterion line."""
    marker = request.node.get_closest_marker("criterion")
    key = marker.args[0] if marker else None

    def note(text):
        if key is not None:
            _DETAILS.setdefault(key, []).append(text)
    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n = marker.args[0]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        passed = report.outcome == "passed"
        _RESULTS[n] = _RESULTS.get(n, True) and passed


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        status = "PASS" if _RESULTS[n] else "FAIL"
        note = "; ".join(_DETAILS.get(n, []))
        terminalreporter.write_line(f"criterion {n}: {status}" + (f" ({note})" if note else ""))
