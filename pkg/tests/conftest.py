from __future__ import annotations

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def four_point():
    """Tiny dataset with hand-computable OLS quantities."""
    Y = np.array([0.0, 1.0, 2.0, 4.0])
    X_T = np.array([[0.0], [1.0], [2.0], [3.0]])
    return Y, X_T
