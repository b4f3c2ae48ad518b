"""Shared test plumbing: the acceptance-criteria recorder and its
one-line-per-criterion terminal summary."""
from __future__ import annotations

from contextlib import contextmanager

import pytest

_RESULTS: dict = {}


@pytest.fixture
def criterion():
    """Context manager factory: wraps one acceptance criterion's checks and
    records pass/fail for the terminal summary."""

    @contextmanager
    def record(number: int, description: str):
        try:
            yield
        except BaseException:
            _RESULTS[number] = (description, False)
            raise
        _RESULTS[number] = (description, True)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        description, ok = _RESULTS[number]
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(
            f"criterion {number:2d} [{status}] {description}")
