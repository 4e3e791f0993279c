import numpy as np
import pytest

from burgers_vortex.weighted_fields import Grid2D, Grid3D


@pytest.fixture(scope="session")
def grid2():
    return Grid2D(12.0, 64)


@pytest.fixture(scope="session")
def grid3():
    return Grid3D(Grid2D(12.0, 64), 8.0, 32)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_CRITERIA = {}


def record_criterion(number, name, passed, detail):
    line = f"CRITERION {number:2d} {'PASS' if passed else 'FAIL'}  {name}: {detail}"
    _CRITERIA[number] = line
    print("\n" + line)


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[k])
