import numpy as np
import pytest


def random_hermitian(rng, n, batch=()):
    H = rng.normal(size=batch + (n, n)) + 1j * rng.normal(size=batch + (n, n))
    return 0.5 * (H + np.conj(np.swapaxes(H, -1, -2)))


def random_metric(rng, n, batch=()):
    M = rng.normal(size=batch + (n, n)) + 1j * rng.normal(size=batch + (n, n))
    return M @ np.conj(np.swapaxes(M, -1, -2)) + n * np.eye(n)


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)
