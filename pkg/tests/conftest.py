"""Acceptance reporting: one PASS/FAIL line per criterion at the end of the run.

Acceptance tests are named ``test_cNN_*``; the outcome comes from pytest
itself, the detail string from ``record_property("detail", ...)``.
"""

import re

_CRIT = re.compile(r"test_c(\d+)_")
_results = {}


def pytest_runtest_logreport(report):
    m = _CRIT.search(report.nodeid)
    if not m or "test_acceptance" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        num = int(m.group(1))
        detail = dict(report.user_properties).get("detail", "")
        prev = _results.get(num)
        ok = report.passed and (prev is None or prev[0])
        _results[num] = (ok, detail if detail or prev is None else prev[1])


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_results):
        ok, detail = _results[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
