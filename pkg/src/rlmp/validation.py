"""Small input-validation helpers shared across modules."""

from __future__ import annotations

import numpy as np


def as_float_array(x, name: str, ndim: int | None = None) -> np.ndarray:
    """Coerce to a float64 ndarray, checking finiteness and rank.

    Raises ValueError with a message naming the offending argument.
    """
    arr = np.asarray(x, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"{name} must have ndim={ndim}, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_scalar(x, name: str, low: float | None = None, high: float | None = None,
                 positive: bool = False) -> float:
    """Validate a finite real scalar, optionally bounded or strictly positive."""
    val = float(x)
    if not np.isfinite(val):
        raise ValueError(f"{name} must be finite, got {val}")
    if positive and val <= 0.0:
        raise ValueError(f"{name} must be > 0, got {val}")
    if low is not None and val < low:
        raise ValueError(f"{name} must be >= {low}, got {val}")
    if high is not None and val > high:
        raise ValueError(f"{name} must be <= {high}, got {val}")
    return val


def check_action_grid(grid) -> np.ndarray:
    """Validate an exponent grid: non-empty, sorted, unique, within [1, 2]."""
    arr = as_float_array(grid, "action_grid", ndim=1)
    if arr.size == 0:
        raise ValueError("action_grid must be non-empty")
    if np.any(arr < 1.0) or np.any(arr > 2.0):
        raise ValueError("action_grid values must lie in [1, 2]")
    if np.any(np.diff(arr) <= 0.0):
        raise ValueError("action_grid must be strictly increasing")
    return arr
