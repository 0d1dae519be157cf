import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_ACCEPTANCE = []


@pytest.fixture(scope="session")
def criterion():
    """Record one pass/fail line per acceptance criterion; returns the verdict."""
    def record(number: int, ok: bool, text: str) -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {text}"
        _ACCEPTANCE.append((number, line))
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)
