import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

import acceptlog  # noqa: E402


def pytest_terminal_summary(terminalreporter):
    if acceptlog.LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(acceptlog.LINES, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
