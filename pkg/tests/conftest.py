import pytest

# Acceptance verdicts, filled by tests/test_acceptance.py: name -> list of (check, ok, detail).
VERDICTS: dict[str, list[tuple[str, bool, str]]] = {}


def record(criterion: str, check: str, ok: bool, detail: str = "") -> bool:
    VERDICTS.setdefault(criterion, []).append((check, bool(ok), detail))
    print(f"{'PASS' if ok else 'FAIL'} {criterion} [{check}] {detail}")
    return bool(ok)


@pytest.fixture
def verdict():
    return record


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(VERDICTS):
        checks = VERDICTS[name]
        failed = [c for c, ok, _ in checks if not ok]
        status = "PASS" if not failed else "FAIL"
        tail = "" if not failed else f" (unmet: {', '.join(failed)})"
        terminalreporter.write_line(f"{status} {name}{tail}")
        for check, ok, detail in checks:
            terminalreporter.write_line(f"    {'ok  ' if ok else 'FAIL'} {check}: {detail}")
