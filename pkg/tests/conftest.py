import pytest

_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one acceptance line; the test still asserts on ``ok``."""

    def record(n: int, ok: bool, detail: str) -> bool:
        _CRITERIA[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(_CRITERIA[n])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
