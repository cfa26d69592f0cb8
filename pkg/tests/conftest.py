"""Collects acceptance-criterion outcomes and prints one line per criterion."""

from __future__ import annotations

import pytest

_RESULTS: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or report.when not in ("setup", "call"):
        return
    n, title = mark.args
    if report.when == "setup" and report.passed:
        return
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    if report.failed:
        msg = report.longrepr.reprcrash.message if hasattr(report.longrepr, "reprcrash") else str(report.longrepr)
        detail = (detail + "; " if detail else "") + msg.splitlines()[0]
    _RESULTS[n] = ("PASS" if report.passed else "FAIL", title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        status, title, detail = _RESULTS[n]
        line = f"{status} criterion {n:>2}: {title}"
        terminalreporter.write_line(line + (f" ({detail})" if detail else ""))
