import numpy as np
import pytest

from vkrod import MaterialModel, effective_stiffness, generate_mesh, normalize


@pytest.fixture(scope="session")
def mat():
    return MaterialModel(lam=1.0, mu=1.0)


@pytest.fixture(scope="session")
def disk8(mat):
    mesh, _ = normalize(generate_mesh("disk", 8))
    return mesh


@pytest.fixture(scope="session")
def disk16(mat):
    mesh, _ = normalize(generate_mesh("disk", 16))
    return mesh


@pytest.fixture(scope="session")
def disk8_stiffness(disk8, mat):
    return effective_stiffness(disk8, mat)


@pytest.fixture(scope="session")
def disk16_stiffness(disk16, mat):
    return effective_stiffness(disk16, mat)


@pytest.fixture(scope="session")
def disk64_stiffness(mat):
    mesh, _ = normalize(generate_mesh("disk", 64))
    return effective_stiffness(mesh, mat)


def random_rotation(rng):
    """Rotation matrix from a random axis-angle (uniform axis, angle <= pi)."""
    import scipy.linalg as sla

    v = rng.standard_normal(3)
    v /= np.linalg.norm(v)
    angle = rng.uniform(0, np.pi)
    K = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return sla.expm(angle * K)
