"""Collects acceptance outcomes and prints one verdict line per criterion."""
import pytest

VERDICTS = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    label = getattr(item.function, "criterion", None)
    if label is None:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        VERDICTS[label] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for label, verdict in VERDICTS.items():
        terminalreporter.write_line(f"{verdict}  {label}")
