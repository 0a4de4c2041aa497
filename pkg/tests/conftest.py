from __future__ import annotations

import re

import pytest

_criteria: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = re.match(r"test_criterion_(\d+)_", item.name)
    if not m or item.module.__name__.split(".")[-1] != "test_acceptance":
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        doc = (item.function.__doc__ or item.name).strip().splitlines()[0]
        _criteria[int(m.group(1))] = ("PASS" if rep.passed else "FAIL", doc)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_criteria):
        status, doc = _criteria[k]
        terminalreporter.write_line(f"criterion {k}: {status} - {doc}")
