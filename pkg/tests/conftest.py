import pytest

_criteria = {}


@pytest.fixture
def criterion():
    """Record a pass/fail line for an acceptance criterion.

    Usage: ``criterion(3, ok, "detail")`` right before asserting ``ok``.
    """
    def record(number, ok, detail=""):
        _criteria[number] = (bool(ok), detail)
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        ok, detail = _criteria[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {detail}")
