import helpers


def pytest_terminal_summary(terminalreporter):
    if not helpers.RESULTS:
        return
    from test_acceptance import report_line
    terminalreporter.section("acceptance criteria")
    for i in sorted(helpers.RESULTS):
        terminalreporter.write_line(report_line(i, *helpers.RESULTS[i]))
