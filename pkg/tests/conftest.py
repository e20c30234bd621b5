import numpy as np
import pytest

from randdepth import Dataset


def brute_force_split(X, y, min_leaf):
    """Enumerate every (feature, midpoint) pair directly; no sorting tricks."""
    n, p = X.shape
    parent = float(((y - y.mean()) ** 2).sum())
    best = None
    for j in range(p):
        values = sorted(set(X[:, j].tolist()))
        for lo, hi in zip(values[:-1], values[1:]):
            s = (lo + hi) / 2
            mask = X[:, j] <= s
            if mask.sum() < min_leaf or (~mask).sum() < min_leaf:
                continue
            left, right = y[mask], y[~mask]
            sse = float(((left - left.mean()) ** 2).sum()) + float(((right - right.mean()) ** 2).sum())
            if sse >= parent:
                continue
            if best is None or sse < best[2]:
                best = (j, s, sse)
    return best


def make_regression(n=300, p=5, seed=0, noise=0.3):
    gen = np.random.default_rng(seed)
    X = gen.normal(size=(n, p))
    y = np.sin(X[:, 0]) + X[:, 1] * (X[:, 2] > 0) + noise * gen.normal(size=n)
    return Dataset(X, y)


@pytest.fixture
def regression_data():
    return make_regression()
