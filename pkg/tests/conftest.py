from __future__ import annotations

import sys


def pytest_terminal_summary(terminalreporter):
    results = {}
    for name, module in list(sys.modules.items()):
        if name.endswith("test_acceptance") and hasattr(module, "RESULTS"):
            results.update(module.RESULTS)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
