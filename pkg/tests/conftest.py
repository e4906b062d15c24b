import os
import time

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.register_profile("thorough", parent=settings.get_profile("default"), max_examples=200)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_ACCEPTANCE_LINES = []


class Acceptance:
    """Times one criterion and emits a single pass/fail line."""

    def __init__(self, number: int, title: str, limit: float):
        self.number, self.title, self.limit = number, title, limit
        self.start = time.perf_counter()

    def finish(self, ok: bool, detail: str) -> None:
        elapsed = time.perf_counter() - self.start
        in_time = elapsed <= self.limit
        status = "PASS" if ok and in_time else "FAIL"
        line = f"ACCEPTANCE {self.number:2d} {status}  {self.title}: {detail} [{elapsed:.1f}s / {self.limit:g}s]"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
        assert in_time, line


@pytest.fixture
def acceptance():
    return Acceptance


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
