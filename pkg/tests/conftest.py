import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from heatreg import build_dataset  # noqa: E402


def random_multipop(rng, n=(50, 40), p=8, s=3, sigma=(1.0, 2.0),
                    availability=None, labels=("A", "B"), beta_scale=1.0):
    """Small random two-population instance with known truth."""
    J = len(n)
    B = np.zeros((p, J))
    for j in range(J):
        idx = rng.choice(p, size=s, replace=False)
        B[idx, j] = beta_scale * rng.standard_normal(s)
    ys, Xs = [], []
    for j in range(J):
        X = rng.standard_normal((n[j], p))
        if availability is not None:
            X[:, ~availability[:, j]] = 0.0
            B[~availability[:, j], j] = 0.0
        y = X @ B[:, j] + sigma[j] * rng.standard_normal(n[j])
        ys.append(y)
        Xs.append(X)
    data = build_dataset(ys, Xs, labels, availability=availability)
    return data, B, np.asarray(sigma, float)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
