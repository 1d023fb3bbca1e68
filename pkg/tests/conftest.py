import os
import re
import sys

sys.path.insert(0, os.path.dirname(__file__))

_CRITERIA = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_c(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    key = (int(m.group(1)), m.group(2))
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _CRITERIA[key] = report.outcome
    if report.when == "teardown" and report.outcome == "failed":
        _CRITERIA[key] = "failed"


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for (num, name), outcome in sorted(_CRITERIA.items()):
        label = "PASS" if outcome == "passed" else "FAIL"
        tr.write_line(f"criterion {num:2d}  {name.replace('_', ' '):38s} {label}")
