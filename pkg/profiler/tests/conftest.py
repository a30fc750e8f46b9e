"""Pytest wiring for the toolchain suite.

Contract tests record one verdict per criterion through the
``criterion`` fixture; the terminal summary prints them as
``[PASS]``/``[FAIL]`` lines at the end of the run.
"""

from contextlib import contextmanager

import pytest

_CRITERIA = []


@pytest.fixture
def criterion():
    @contextmanager
    def guard(name):
        try:
            yield
        except BaseException:
            _CRITERIA.append((name, False))
            print(f"[FAIL] {name}")
            raise
        else:
            _CRITERIA.append((name, True))
            print(f"[PASS] {name}")

    return guard


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("toolchain criteria")
    for name, passed in _CRITERIA:
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{verdict}] {name}")
