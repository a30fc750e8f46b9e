"""Shared pytest wiring.

Acceptance tests record one verdict per criterion through the
``criterion`` fixture; the terminal summary at the end of the run
prints them as ``[PASS]``/``[FAIL]`` lines so the full gate status is
visible in one block.
"""

from contextlib import contextmanager

import pytest

_CRITERIA = []


def record_criterion(name: str, passed: bool) -> None:
    _CRITERIA.append((name, passed))


@pytest.fixture
def criterion():
    @contextmanager
    def guard(name):
        try:
            yield
        except BaseException:
            record_criterion(name, False)
            print(f"[FAIL] {name}")
            raise
        else:
            record_criterion(name, True)
            print(f"[PASS] {name}")

    return guard


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed in _CRITERIA:
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{verdict}] {name}")
