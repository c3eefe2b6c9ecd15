import math

import pytest

from dsflab.lpgeom import NormContext


@pytest.fixture
def ctx22():
    return NormContext(2, 2.0)


def ctx(d, p):
    return NormContext(d, math.inf if p == "inf" else p)


CRITERIA: dict[int, str] = {}


def record_criterion(n: int, ok: bool, detail: str) -> None:
    """Store one verdict line per acceptance criterion (shown in the terminal summary)."""
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} {detail}"
    CRITERIA[n] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        terminalreporter.write_line(CRITERIA[n])
