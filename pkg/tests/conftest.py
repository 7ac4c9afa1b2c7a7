import pytest

VERDICTS = []


@pytest.fixture(scope="session")
def verdict():
    """Record one pass/fail line per acceptance criterion (``ok=None`` marks a skip)."""

    def record(number, title, ok, detail):
        status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
        line = f"[{status}] criterion {number:>2}: {title} -- {detail}"
        VERDICTS.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(VERDICTS):
        terminalreporter.write_line(line)
