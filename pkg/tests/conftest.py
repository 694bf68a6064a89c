import numpy as np
import pytest

from audiomesh import shapes
from audiomesh.meshio import Mesh
from audiomesh.operators import compute_operators


@pytest.fixture(scope="session")
def icosahedron():
    return shapes.icosahedron()


@pytest.fixture(scope="session")
def icosahedron_ops(icosahedron):
    return compute_operators(icosahedron, k=12)


@pytest.fixture(scope="session")
def icosphere2():
    return shapes.icosphere(2)


@pytest.fixture(scope="session")
def icosphere2_ops(icosphere2):
    return compute_operators(icosphere2, k=32)


@pytest.fixture
def unit_triangle():
    verts = np.array(
        [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, np.sqrt(3) / 2, 0.0]]
    )
    return Mesh(verts, np.array([[0, 1, 2]], dtype=np.int32))


@pytest.fixture
def unit_square():
    # unit square split along the diagonal (0, 3)
    verts = np.array(
        [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]]
    )
    faces = np.array([[0, 1, 3], [0, 3, 2]], dtype=np.int32)
    return Mesh(verts, faces)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
