from fractions import Fraction

import pytest
from hypothesis import settings

from infswap.potential import LandscapeGraph, extract_landscape, franz_potential

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def franz():
    return franz_potential(0.85)


@pytest.fixture(scope="session")
def franz_landscape(franz):
    return extract_landscape(franz)


@pytest.fixture
def two_well_chain():
    # y1 = 0, saddle 4, y2 = 3/2, outer saddle 20
    return LandscapeGraph.chain([0, 4, Fraction(3, 2), 20])


@pytest.fixture
def three_well_chain():
    # three wells whose graph constants satisfy h = 4a, w = 5a, W_hat(y1) = 7
    return LandscapeGraph.chain([0, 4, 2, 6, 1, 8])


_VERDICTS = []


@pytest.fixture
def verdict():
    """Print and remember one PASS/FAIL line for an acceptance criterion."""

    def record(n, ok, detail):
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _VERDICTS.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
