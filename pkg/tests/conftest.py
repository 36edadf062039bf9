import pytest

_ACCEPTANCE = {}


@pytest.fixture
def accept():
    """Record one acceptance line: accept(number, passed, detail)."""

    def record(number, passed, detail):
        line = f"[criterion {number:>2}] {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[k])
