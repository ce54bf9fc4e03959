import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

# criterion number -> list of (check name, passed, detail)
CRITERIA: dict[int, list[tuple[str, bool, str]]] = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        checks = CRITERIA[n]
        ok = all(p for _, p, _ in checks)
        detail = "; ".join(f"{name}: {d}" for name, _, d in checks)
        terminalreporter.write_line(f"CRITERION {n} {'PASS' if ok else 'FAIL'} | {detail}")
