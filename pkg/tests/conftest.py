"""Shared pytest plumbing for the acceptance suite.

Acceptance tests print one pass/fail line each; default output capture
would hide those lines for passing tests, so they are echoed again in a
terminal-summary section.
"""

import pytest

_criterion_lines: list[str] = []


@pytest.fixture
def report_criterion():
    def _report(line: str) -> None:
        print(line, flush=True)
        _criterion_lines.append(line)

    return _report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _criterion_lines:
        terminalreporter.section("acceptance criteria")
        for line in _criterion_lines:
            terminalreporter.write_line(line)
