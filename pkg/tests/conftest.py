import pytest

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one acceptance line, print it, and fail the test if the criterion fails."""

    def _report(number, ok, detail, seconds=None):
        timing = "" if seconds is None else f" [{seconds:.1f}s]"
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}{timing}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
