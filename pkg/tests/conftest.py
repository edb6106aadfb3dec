"""Shared fixtures and the acceptance-criteria result reporter."""

from __future__ import annotations

from pathlib import Path

import pytest

TESTS_DIR = Path(__file__).parent
DATA_DIR = TESTS_DIR / "data"
GOLDEN_DIR = TESTS_DIR / "golden"
REPO_DIR = TESTS_DIR.parent

_ACCEPTANCE_RESULTS: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "acceptance(num, title): marks a test as one numbered acceptance criterion",
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    num = marker.kwargs["num"]
    title = marker.kwargs["title"]
    if report.when == "call":
        _ACCEPTANCE_RESULTS[num] = (title, "PASS" if report.passed else "FAIL")
    elif report.when == "setup" and not report.passed:
        _ACCEPTANCE_RESULTS[num] = (title, "FAIL")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE_RESULTS):
        title, verdict = _ACCEPTANCE_RESULTS[num]
        terminalreporter.write_line(f"criterion {num}: {verdict} - {title}")


@pytest.fixture
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture
def golden_dir() -> Path:
    return GOLDEN_DIR
