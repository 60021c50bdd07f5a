import numpy as np
import pytest
from hypothesis import settings

from convex_smooth.core import from_scalar

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def square():
    return from_scalar(lambda x: x * x, lambda x: 2 * x, smoothness="Cinf", name="x^2")


@pytest.fixture
def absval():
    return from_scalar(np.abs, np.sign, name="|x|")


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict_line():
    """Record one pass/fail line per acceptance criterion."""
    def emit(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        ACCEPTANCE_LINES.append(line)
        return ok
    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
