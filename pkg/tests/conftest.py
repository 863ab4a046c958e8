import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def path_laplacian():
    return np.array([[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]])


@pytest.fixture
def theta_2x2():
    return np.array([[1.5, -1.5], [-1.5, 1.5]])


def random_graph_laplacian(rng, n):
    """Connected weighted graph Laplacian: PSD, L1 = 0, rank n-1."""
    W = rng.uniform(0.2, 2.0, size=(n, n))
    W = np.triu(W, 1)
    mask = rng.uniform(size=(n, n)) < 0.5
    W = W * np.triu(mask, 1)
    for i in range(n - 1):  # spanning path keeps the graph connected
        W[i, i + 1] = max(W[i, i + 1], 0.5)
    W = W + W.T
    return np.diag(W.sum(axis=1)) - W
