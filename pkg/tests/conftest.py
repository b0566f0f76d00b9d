"""Shared test plumbing.

The acceptance tests record one human-readable line per criterion; the
terminal-summary hook reprints them after the run so the verdict survives
pytest's output capture.
"""

CRITERION_LINES: list[str] = []


def record_criterion(line: str) -> None:
    CRITERION_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if not CRITERION_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in CRITERION_LINES:
        terminalreporter.write_line(line)
