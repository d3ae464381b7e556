import pytest

_results = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion the test gates")


def pytest_runtest_logreport(report):
    if report.when == "call" or report.outcome != "passed":
        marks = getattr(report, "criterion", None)
        if marks is not None:
            ok = report.outcome == "passed"
            _results[marks] = _results.get(marks, True) and ok


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        rep.criterion = mark.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if _results[n] else 'FAIL'}")
