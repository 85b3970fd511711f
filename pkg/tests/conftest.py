import pytest

_RESULTS: list[tuple[int, bool, str]] = []


@pytest.fixture
def criterion():
    """Record one acceptance line, print it, then assert it."""

    def record(number: int, passed: bool, detail: str):
        line = f"CRITERION {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        _RESULTS.append((number, passed, line))
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, _, line in sorted(_RESULTS):
        terminalreporter.write_line(line)
