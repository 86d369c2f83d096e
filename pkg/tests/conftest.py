import time
from contextlib import contextmanager

import pytest

ACCEPTANCE_LINES: list[str] = []


@contextmanager
def _criterion(number: int, title: str, budget: float):
    start = time.perf_counter()
    try:
        yield
    except BaseException as exc:
        line = f"FAIL criterion {number:2d}: {title} ({type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''})"
        ACCEPTANCE_LINES.append(line)
        print(line)
        raise
    elapsed = time.perf_counter() - start
    ok = elapsed < budget
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d}: {title} [{elapsed:.2f} s, budget {budget:g} s]"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, f"runtime {elapsed:.2f} s exceeds {budget} s"


@pytest.fixture
def criterion():
    """Context manager timing one acceptance criterion and logging its outcome."""
    return _criterion


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
