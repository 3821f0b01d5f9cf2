"""Collects acceptance outcomes and prints one line per criterion."""

import pytest

from support import ACCEPTANCE_DETAILS

_OUTCOMES = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or rep.skipped:
        return
    if rep.when == "call" or rep.failed:
        _OUTCOMES[mark.args[0]] = "PASS" if rep.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for code in sorted(_OUTCOMES):
        detail = ACCEPTANCE_DETAILS.get(code, "")
        terminalreporter.write_line(f"{code} {_OUTCOMES[code]}  {detail}".rstrip())
