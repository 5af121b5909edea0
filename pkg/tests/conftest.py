import pytest

_verdicts = []


@pytest.fixture
def verdict():
    """Record a one-line pass/fail verdict, echoed in the terminal summary."""

    def record(number, title, ok, detail=""):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        _verdicts.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_verdicts):
        terminalreporter.write_line(line)
