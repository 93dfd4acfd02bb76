import numpy as np
import pytest

MASK_2F = np.array([[1, 0], [1, 0], [0, 1], [0, 1]])


def random_stable_theta(rng, p=2, scale=2.0):
    """Random theta with positive trace and determinant (p = 2) or a stable spectrum."""
    while True:
        theta = rng.normal(0.0, scale / 2, size=(p, p)) + np.eye(p) * rng.uniform(0.2, scale)
        if np.all(np.linalg.eigvals(theta).real > 0.05):
            return theta


def random_lower_sigma(rng, p=2):
    s = np.tril(rng.normal(0.0, 0.5, size=(p, p)), -1)
    s[np.diag_indices(p)] = rng.uniform(0.2, 2.0, size=p)
    return s


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
