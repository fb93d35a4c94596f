"""Shared test plumbing: the acceptance-criteria verdict registry.

Acceptance tests record one verdict per criterion; the terminal-summary
hook prints them after capture ends, so every ``pytest`` run shows the
pass/fail line for each criterion regardless of capture mode.
"""

CRITERION_VERDICTS: list[tuple[str, bool, str]] = []


def record_verdict(name: str, ok: bool, detail: str) -> None:
    CRITERION_VERDICTS.append((name, ok, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not CRITERION_VERDICTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, ok, detail in CRITERION_VERDICTS:
        line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
        terminalreporter.write_line(line, green=ok, red=not ok)
