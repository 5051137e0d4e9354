import re

import pytest

_CRITERIA = {}
_PATTERN = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = _PATTERN.search(item.nodeid)
    if not m or rep.when not in ("setup", "call"):
        return
    num = int(m.group(1))
    detail = dict(item.user_properties).get("measured", "")
    if rep.when == "setup" and rep.failed:
        _CRITERIA[num] = ("ERROR", m.group(2), "fixture failed")
    elif rep.when == "call":
        _CRITERIA[num] = ("PASS" if rep.passed else "FAIL", m.group(2), detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        status, name, detail = _CRITERIA[num]
        terminalreporter.write_line(f"criterion {num:2d} {status:5s} {name}: {detail}")
