"""Collects the per-criterion verdict lines printed by the acceptance
tests and repeats them in one block at the end of the run, where they
survive output capture."""

_criterion_lines = []


def record_criterion(text):
    _criterion_lines.append(text)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _criterion_lines:
        terminalreporter.section("acceptance criteria")
        for text in _criterion_lines:
            terminalreporter.line(text)
