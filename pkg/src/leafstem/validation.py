"""Input checks shared by the estimators."""

import numpy as np
from sklearn.utils import check_array


def check_points(X, dim=3, allow_empty=False):
    """Finite float64 array of shape ``(n, dim)``."""
    if allow_empty and np.asarray(X).size == 0:
        return np.empty((0, dim))
    X = check_array(X, dtype=np.float64, ensure_all_finite=True)
    if X.shape[1] != dim:
        raise ValueError(f"expected {dim} columns, got {X.shape[1]}")
    return X


def check_positive(name, value):
    if not value > 0:
        raise ValueError(f"{name} must be > 0, got {value}")
    return value
