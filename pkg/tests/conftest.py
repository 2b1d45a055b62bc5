"""Acceptance bookkeeping: one pass/fail line per criterion at the end of the run."""

from __future__ import annotations

import pytest

CRITERIA = {
    1: "end-to-end happy path",
    2: "H1 anonymity scan",
    3: "H2 accountability threshold",
    4: "badge overhead k*N and reuse",
    5: "revocation cascade",
    6: "policy engine oracle equivalence",
    7: "workflow exploration",
    8: "APT lifecycle",
    9: "incentives conservation",
    10: "tamper detection",
}

_results: dict[int, list[bool]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion the test covers")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _results.setdefault(marker.args[0], []).append(report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number, title in CRITERIA.items():
        runs = _results.get(number)
        if runs is None:
            status = "NOT RUN"
        else:
            status = "PASS" if all(runs) else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} {status:7s} {title} "
                                    f"({sum(runs or [])}/{len(runs or [])} checks)")
