import os

import pytest
from hypothesis import settings

from motion_lingua.core import PipelineConfig

settings.register_profile("default", deadline=None, max_examples=100)
settings.register_profile("thorough", deadline=None, max_examples=1000)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def cfg():
    return PipelineConfig()


ACCEPTANCE_LINES: list = []


@pytest.fixture
def acceptance_line():
    """Record one PASS/FAIL line; the lines are repeated in the terminal summary."""

    def record(number: int, ok: bool, text: str) -> None:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {text}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
