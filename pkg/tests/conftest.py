import os
import re
import sys

sys.path.insert(0, os.path.dirname(__file__))

_CRITERIA: dict[int, tuple[str, str]] = {}
_SEVERITY = ["PASS", "SKIP", "FAIL"]
_NAME = re.compile(r"test_criterion_(\d+)_(\w+)")


def pytest_runtest_logreport(report):
    m = _NAME.search(report.nodeid)
    if not m or "test_acceptance.py" not in report.nodeid:
        return
    idx = int(m.group(1))
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        verdict = "PASS" if report.outcome == "passed" else ("SKIP" if report.skipped else "FAIL")
        previous = _CRITERIA.get(idx, (None, "PASS"))[1]
        # parametrized criteria report their worst outcome
        verdict = max(previous, verdict, key=_SEVERITY.index)
        _CRITERIA[idx] = (m.group(2).replace("_", " "), verdict)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for idx in sorted(_CRITERIA):
        label, verdict = _CRITERIA[idx]
        terminalreporter.write_line(f"criterion {idx:2d} [{verdict}] {label}")
