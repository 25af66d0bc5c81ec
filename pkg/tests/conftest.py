"""Prints one PASS/FAIL line per acceptance criterion at the end of the run."""
import pytest

_results: dict = {}


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("acceptance")
    if marker is None or call.when != "call":
        return
    number, title = marker.args
    ok = call.excinfo is None
    _results[number] = (title, _results.get(number, (title, True))[1] and ok)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        title, ok = _results[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {title}")
