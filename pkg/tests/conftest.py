import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))  # make oracles importable

_ACCEPTANCE_RESULTS = {}


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    if "test_acceptance" not in report.nodeid:
        return
    _ACCEPTANCE_RESULTS[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for nodeid in sorted(_ACCEPTANCE_RESULTS):
        outcome = _ACCEPTANCE_RESULTS[nodeid]
        label = nodeid.split("::")[-1]
        status = "PASS" if outcome == "passed" else outcome.upper()
        terminalreporter.write_line(f"{label}: {status}")
