"""Shared pytest hooks for the suite.

The acceptance tests accumulate one ``[PASS]``/``[FAIL]`` line per
criterion in ``test_acceptance.SCORECARD``.  Default capture redirects
the file descriptor itself, so inline prints from passing tests never
reach the terminal; this hook replays the scorecard as a summary
section after capture has ended.
"""

import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    for name in ("test_acceptance", "tests.test_acceptance"):
        mod = sys.modules.get(name)
        lines = getattr(mod, "SCORECARD", None)
        if lines:
            terminalreporter.section("acceptance scorecard")
            for line in lines:
                terminalreporter.write_line(line)
            break
