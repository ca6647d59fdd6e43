"""Echo the acceptance-criterion pass/fail lines in the terminal summary."""

import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = []
    for name, mod in sys.modules.items():
        if name.rpartition(".")[2] == "test_acceptance":
            lines = getattr(mod, "REPORT_LINES", [])
            break
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
