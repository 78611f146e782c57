import numpy as np
import pytest

from meshblend import primitives


@pytest.fixture
def octahedron():
    return primitives.make_octahedron()


@pytest.fixture
def small_sphere():
    return primitives.make_icosphere(subdivisions=1)  # 80 faces


@pytest.fixture
def rng():
    return np.random.default_rng(20240831)
