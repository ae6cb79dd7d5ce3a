import pytest

from rwls import events


@pytest.fixture
def checked_invariants(monkeypatch):
    monkeypatch.setattr(events, "CHECK_INVARIANTS", True)


def pytest_terminal_summary(terminalreporter):
    try:
        from tests.test_acceptance import RESULTS
    except ImportError:
        try:
            from test_acceptance import RESULTS
        except ImportError:
            return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(RESULTS.values()):
        terminalreporter.write_line(line)
