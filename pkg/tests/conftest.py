import pytest


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


def pytest_terminal_summary(terminalreporter):
    results = {}
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            crit = getattr(report, "criterion", None)
            if crit is None:
                continue
            if outcome != "passed":
                results[crit] = "FAIL"
            elif report.when == "call":
                results.setdefault(crit, "PASS")
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for (n, title), status in sorted(results.items()):
        terminalreporter.write_line(f"{status} criterion {n:2d}: {title}")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = tuple(marker.args)
