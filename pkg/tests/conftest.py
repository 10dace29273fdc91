import numpy as np
import pytest

from turfsim.mesh import Rectangle, build_mesh


@pytest.fixture(scope="session")
def unit_mesh_l0():
    return build_mesh(Rectangle(0.0, 1.0, 0.0, 1.0), 0)


@pytest.fixture(scope="session")
def unit_mesh_l1():
    return build_mesh(Rectangle(0.0, 1.0, 0.0, 1.0), 1)


@pytest.fixture(scope="session")
def mesh_l2():
    return build_mesh(Rectangle(), 2)


@pytest.fixture(scope="session")
def mesh_l3():
    return build_mesh(Rectangle(), 3)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
