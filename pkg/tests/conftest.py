"""Collects the acceptance outcomes and prints one line per criterion."""

import pytest

_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when != "call" and not (call.when == "setup" and call.excinfo):
        return
    num, title = marker.args
    entry = _CRITERIA.setdefault(num, {"title": title, "ok": True, "tests": 0})
    entry["tests"] += 1
    if call.excinfo is not None:
        entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        e = _CRITERIA[num]
        flag = "PASS" if e["ok"] else "FAIL"
        terminalreporter.write_line(f"criterion {num:2d}: {flag}  {e['title']} ({e['tests']} tests)")
