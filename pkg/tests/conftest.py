def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print the acceptance verdict lines after capture ends."""
    try:
        from test_acceptance import REPORT_LINES
    except ImportError:
        return
    if REPORT_LINES:
        terminalreporter.section("acceptance report")
        for line in REPORT_LINES:
            terminalreporter.write_line(line)
