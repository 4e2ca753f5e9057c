"""Collects one verdict line per acceptance criterion and prints them after the run."""

ACCEPTANCE: dict[int, str] = {}


def record(number: int, status: str, detail: str) -> None:
    ACCEPTANCE[number] = f"criterion {number:>2}: {status:<9} {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
