"""Collects the acceptance verdicts and prints them at the end of the run."""

VERDICTS: dict = {}


def record(number: int, passed: bool, detail: str) -> None:
    VERDICTS.setdefault(number, []).append((passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(VERDICTS):
        parts = VERDICTS[number]
        ok = all(p for p, _ in parts)
        detail = "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
