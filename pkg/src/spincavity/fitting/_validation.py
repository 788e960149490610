"""Input checks shared by the estimators."""

from __future__ import annotations

import numpy as np


def check_axis(x, name="X", min_points=2):
    """Return ``x`` as a strictly increasing finite 1-D float array.

    A single-column 2-D array is accepted and flattened.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 2 and x.shape[1] == 1:
        x = x[:, 0]
    if x.ndim != 1:
        raise ValueError(f"{name} must be 1-D or a single column, got shape {x.shape}")
    if x.size < min_points:
        raise ValueError(f"{name} needs at least {min_points} points, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    if np.any(np.diff(x) <= 0):
        raise ValueError(f"{name} must be strictly increasing")
    return x


def check_target(y, n, name="y", allow_complex=False):
    y = np.asarray(y)
    if y.ndim == 2 and y.shape[1] == 1:
        y = y[:, 0]
    if y.ndim != 1 or y.size != n:
        raise ValueError(f"{name} must be 1-D with {n} entries, got shape {y.shape}")
    if np.iscomplexobj(y):
        if not allow_complex:
            raise ValueError(f"{name} must be real")
        y = y.astype(complex)
    else:
        y = y.astype(float)
    if not np.all(np.isfinite(y)):
        raise ValueError(f"{name} contains non-finite values")
    return y


def check_weights(w, n):
    if w is None:
        return np.ones(n)
    w = np.asarray(w, dtype=float).ravel()
    if w.size != n:
        raise ValueError(f"weights must have {n} entries, got {w.size}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and >= 0")
    if not np.any(w > 0):
        raise ValueError("all weights are zero")
    return w
