"""Shared fixtures plus a per-criterion summary for the acceptance suite."""

import re

import pytest

_CRITERION = re.compile(r"test_criterion_(\d+)")
_RESULTS: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    note = dict(report.user_properties).get("note", "")
    _RESULTS[int(m.group(1))] = (report.outcome, note)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for index in sorted(_RESULTS):
        outcome, note = _RESULTS[index]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        line = f"criterion {index}: {verdict}"
        if note:
            line += f"  ({note})"
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def trained_model():
    """The shipped forward-model checkpoint; trained by scripts/train_forward_model.py."""
    from affplan.net.model import load_checkpoint
    return load_checkpoint("runs/forward_model.ckpt")
