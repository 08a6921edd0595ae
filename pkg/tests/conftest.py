import pytest

_LINES = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def check(number, title, ok, measured, tolerance, unavailable=None):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2} {title}: {measured} (required {tolerance})"
        _LINES.append(line)
        print(line)
        if unavailable:
            pytest.xfail(unavailable)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
