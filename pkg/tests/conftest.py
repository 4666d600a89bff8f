"""Shared pytest wiring.

The acceptance suite registers one line per criterion through the
``criterion`` fixture; ``pytest_terminal_summary`` prints them after the run
so the whole gate is readable at a glance even without ``-s``.
"""

import pytest


def pytest_configure(config):
    config._acceptance_lines = {}


@pytest.fixture
def criterion(request):
    """Record a measured summary for one acceptance criterion.

    Call it early with a short description, then again with measured values
    once they exist; the last call before the verdict wins.
    """

    def note(number: int, text: str) -> None:
        request.config._acceptance_lines[number] = [text, "no verdict"]
        request.node._criterion_number = number

    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when != "call":
        return
    number = getattr(item, "_criterion_number", None)
    if number is not None:
        item.config._acceptance_lines[number][1] = rep.outcome


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(lines):
        text, outcome = lines[number]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{verdict} criterion {number:2d}: {text}")
