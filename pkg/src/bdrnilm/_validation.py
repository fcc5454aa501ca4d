"""Input validation helpers shared across the package."""
from __future__ import annotations

import numpy as np


class NonFiniteError(FloatingPointError):
    """Raised when a NaN or Inf shows up where finite values are required."""


def check_finite(values, what="array"):
    arr = np.asarray(values)
    if arr.dtype.kind in "fc" and not np.all(np.isfinite(arr)):
        bad = int(np.size(arr) - np.count_nonzero(np.isfinite(arr)))
        raise NonFiniteError(f"{what} contains {bad} non-finite value(s)")
    return arr


def check_odd(value, name):
    value = int(value)
    if value < 1 or value % 2 == 0:
        raise ValueError(f"{name} must be a positive odd integer, got {value}")
    return value


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or int(value) != value or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_windows(X, window_length=None, dtype=np.float64):
    """Coerce ``X`` to a finite 2-d array of windows and check its width."""
    X = np.asarray(X, dtype=dtype)
    if X.ndim == 3 and X.shape[1] == 1:
        X = X[:, 0, :]
    if X.ndim != 2:
        raise ValueError(f"expected windows of shape (n_windows, window_length), got {X.shape}")
    if X.shape[0] == 0:
        raise ValueError("no windows given")
    if window_length is not None and X.shape[1] != window_length:
        raise ValueError(f"window length {X.shape[1]} does not match model window {window_length}")
    check_finite(X, "windows")
    return X


def check_series(values, name="series", dtype=np.float64):
    values = np.asarray(values, dtype=dtype)
    if values.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {values.shape}")
    check_finite(values, name)
    return values
