import numpy as np
import pytest

from riskderiv import ScenarioMatrix

FOUR = np.array([[1.0, 2.0], [3.0, 1.0], [2.0, 4.0], [5.0, 3.0]])


@pytest.fixture
def four():
    """Four equiprobable scenarios; with x=(1,1) the portfolio losses are (3,4,6,8)."""
    return ScenarioMatrix(FOUR)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_instance(rng, n_max=60, d_max=5, weighted=None):
    n = int(rng.integers(1, n_max + 1))
    d = int(rng.integers(1, d_max + 1))
    X = rng.standard_normal((n, d)) * rng.uniform(0.5, 3.0, d)
    if weighted is None:
        weighted = bool(rng.integers(0, 2))
    p = rng.dirichlet(np.ones(n)) if weighted else None
    x = rng.standard_normal(d)
    if not np.any(x):
        x[0] = 1.0
    alpha = float(rng.uniform(0.05, 0.99))
    return ScenarioMatrix(X, p), x, alpha
