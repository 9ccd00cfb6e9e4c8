import warnings

import numpy as np
import pytest

from dvbolt import Slab, WallModel, build_grid, build_linearized

warnings.filterwarnings("ignore", message=".*TBB.*")


@pytest.fixture(scope="session")
def grid8():
    return build_grid(8, 6.0)


@pytest.fixture(scope="session")
def grid10():
    return build_grid(10, 6.0)


@pytest.fixture(scope="session")
def grid12():
    return build_grid(12, 6.0)


@pytest.fixture(scope="session")
def grid16():
    return build_grid(16, 6.0)


@pytest.fixture(scope="session")
def grid24():
    return build_grid(24, 6.0)


@pytest.fixture(scope="session")
def op8(grid8):
    return build_linearized(grid8)


@pytest.fixture(scope="session")
def op10(grid10):
    return build_linearized(grid10)


@pytest.fixture(scope="session")
def op12(grid12):
    return build_linearized(grid12)


@pytest.fixture(scope="session")
def op16(grid16):
    return build_linearized(grid16)


@pytest.fixture(scope="session")
def slab():
    return Slab(0.5)


@pytest.fixture(scope="session")
def iso_wall():
    return WallModel(theta0=0.0)


@pytest.fixture(scope="session")
def two_temp_wall():
    return WallModel(theta0=0.02, theta_fluct={"left": -0.02, "right": 0.02})


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
