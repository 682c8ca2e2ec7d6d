"""Input validation helpers shared by the estimators."""

from __future__ import annotations

import numpy as np


def as_matrix(X, n_features: int | None = None, name: str = "X") -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {X.shape}")
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"{name} has {X.shape[1]} features, expected {n_features}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains NaN or infinite values")
    return X


def as_vector(y, n: int | None = None, name: str = "y", dtype=np.float64) -> np.ndarray:
    y = np.asarray(y, dtype=dtype)
    if y.ndim != 1:
        y = y.reshape(-1)
    if n is not None and y.shape[0] != n:
        raise ValueError(f"{name} has {y.shape[0]} entries, expected {n}")
    if np.issubdtype(y.dtype, np.floating) and not np.all(np.isfinite(y)):
        raise ValueError(f"{name} contains NaN or infinite values")
    return y


def minmax_normalize(y) -> np.ndarray:
    """Rescale to [0, 1]; a constant vector maps to zeros."""
    y = np.asarray(y, dtype=np.float64)
    lo, hi = y.min(), y.max()
    if hi == lo:
        return np.zeros_like(y)
    return (y - lo) / (hi - lo)
