import math

import numpy as np
import pytest
from hypothesis import settings

from bundlerqm.lattice import make_grid
from bundlerqm.models import PhysicalParams

settings.register_profile("default", max_examples=25, deadline=None)
settings.load_profile("default")


@pytest.fixture
def grid8():
    return make_grid(1, 8, 2 * math.pi)


@pytest.fixture
def grid64():
    return make_grid(1, 64, 2 * math.pi)


@pytest.fixture
def grid4_3d():
    return make_grid(3, 4, 2 * math.pi)


@pytest.fixture
def params():
    return PhysicalParams()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
