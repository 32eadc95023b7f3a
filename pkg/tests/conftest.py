import pytest

CRITERIA: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, checks: dict) -> None:
    """Store one pass/fail line for an acceptance criterion, then assert it."""
    ok = all(bool(v[0]) for v in checks.values())
    detail = "; ".join(f"{name}={'ok' if v[0] else 'FAIL'} ({v[1]})" for name, v in checks.items())
    CRITERIA[number] = (ok, detail)
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'}: {detail}")
    failed = [name for name, v in checks.items() if not v[0]]
    assert not failed, f"criterion {number} failed checks: {failed}"


@pytest.fixture
def criterion():
    return record_criterion


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        ok, detail = CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
