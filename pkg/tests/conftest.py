import time

import numpy as np
import pytest

from pifem.mesh import InterfaceCurve, build_interface_mesh, refine_n

BOUNDS = (-1.0, 1.0, -1.0, 1.0)


@pytest.fixture(scope="session")
def circle():
    return InterfaceCurve.circle(0.5)


@pytest.fixture(scope="session")
def levels(circle):
    """Base mesh at target_h=0.25 and four refinements of it."""
    return refine_n(build_interface_mesh(BOUNDS, circle, 0.25), circle, 4)


@pytest.fixture(scope="session")
def coarse(levels):
    return levels[0]


@pytest.fixture(scope="session")
def level1(levels):
    return levels[1]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_SESSION_START = time.perf_counter()
SUITE_BUDGET = 300.0


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    elapsed = time.perf_counter() - _SESSION_START
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
    verdict = "PASS" if elapsed <= SUITE_BUDGET else "FAIL"
    terminalreporter.write_line(f"suite runtime: {verdict}  {elapsed:.1f}s <= {SUITE_BUDGET:.0f}s")
