import pytest

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.fixture
def report_line(request):
    """Attach a one-line measurement summary to the current criterion."""
    notes = []
    request.node._criterion_notes = notes
    return notes.append


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call":
        return
    n = marker.args[0]
    notes = "; ".join(getattr(item, "_criterion_notes", []))
    _CRITERIA[n] = ("PASS" if rep.passed else "FAIL", notes)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        status, notes = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {status}" + (f"  ({notes})" if notes else ""))
