import os
import sys

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

sys.path.insert(0, os.path.dirname(__file__))

_ACCEPTANCE_LINES = []


class AcceptanceLog:
    """Collects one PASS/FAIL line per acceptance criterion."""

    def __init__(self, title):
        self.title = title

    def verdict(self, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] {self.title}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok


@pytest.fixture
def acceptance(request):
    doc = (request.function.__doc__ or request.function.__name__).strip().splitlines()[0]
    return AcceptanceLog(doc)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
