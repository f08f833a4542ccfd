import math

import numpy as np
import pytest

from gradest.geometry import build_flat_torus, build_unit_sphere_mesh

TWO_PI = 2 * math.pi


@pytest.fixture(scope="session")
def circle64():
    return build_flat_torus(1, [TWO_PI], [64])


@pytest.fixture(scope="session")
def torus64():
    return build_flat_torus(2, [TWO_PI, TWO_PI], [64, 64])


@pytest.fixture(scope="session")
def torus32():
    return build_flat_torus(2, [TWO_PI, TWO_PI], [32, 32])


@pytest.fixture(scope="session")
def sphere3():
    return build_unit_sphere_mesh(3)


def sup(f):
    return float(np.max(np.abs(f)))
