import sys


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance verdict lines after the run; the summary is not
    subject to output capture, so they always reach the console."""
    mod = (sys.modules.get("test_acceptance")
           or sys.modules.get("tests.test_acceptance"))
    lines = getattr(mod, "ACCEPTANCE_LINES", []) if mod else []
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.line(line)
