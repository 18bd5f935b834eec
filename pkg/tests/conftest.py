import pytest

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.fixture
def detail(request):
    """Collects a one-line summary for the acceptance report."""
    notes = []
    request.node._acceptance_notes = notes
    return notes.append


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    n, title = mark.args
    notes = "; ".join(getattr(item, "_acceptance_notes", []))
    _ACCEPTANCE[n] = (title, rep.passed, notes, rep.duration)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        title, ok, notes, dur = _ACCEPTANCE[n]
        terminalreporter.write_line(
            f"criterion {n} [{'PASS' if ok else 'FAIL'}] {title} ({dur:.1f} s){': ' + notes if notes else ''}")
