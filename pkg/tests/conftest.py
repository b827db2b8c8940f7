import time

import pytest

from solitonlab.analyze import bisect_heteroclinic
from solitonlab.phase_core import SolitonParams

# Criterion label -> (passed, summary); filled by the acceptance tests.
ACCEPTANCE: dict[str, tuple[bool, str]] = {}
TIMINGS: dict[str, float] = {}


@pytest.fixture(scope="session")
def n2():
    return SolitonParams(2, 1.0)


@pytest.fixture(scope="session")
def bisection(n2):
    """Boundary trajectory between the blow-up and collapse families, n = 2."""
    start = time.perf_counter()
    res = bisect_heteroclinic(n2)
    TIMINGS["bisection"] = time.perf_counter() - start
    return res


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1])):
        ok, summary = ACCEPTANCE[label]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}: {summary}")
