import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ibrsmooth.data import Dataset


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_dataset(rng, n, d, noise=0.1):
    """A smooth regression sample on the unit cube."""
    X = rng.uniform(0.0, 1.0, size=(n, d))
    m = np.sin(3.0 * X[:, 0]) + np.sum(X, axis=1) ** 2 / d
    y = m + noise * rng.normal(size=n)
    return Dataset(X, y)
