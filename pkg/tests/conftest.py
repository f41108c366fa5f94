import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

import acceptance_log  # noqa: E402


def pytest_terminal_summary(terminalreporter):
    if not acceptance_log.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(acceptance_log.LINES, key=lambda s: (len(s), s)):
        terminalreporter.write_line(acceptance_log.LINES[key])
