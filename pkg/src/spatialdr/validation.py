"""Input validation helpers shared across the package."""

from __future__ import annotations

import numpy as np

from .exceptions import ParameterError


def as_vector(x, name: str, n: int | None = None, dtype=float) -> np.ndarray:
    """Coerce to a 1-d array, optionally checking its length."""
    arr = np.asarray(x, dtype=dtype)
    if arr.ndim != 1:
        raise ParameterError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise ParameterError(f"{name} must have length {n}, got {arr.shape[0]}")
    return arr


def as_matrix(x, name: str, n_rows: int | None = None, n_cols: int | None = None) -> np.ndarray:
    """Coerce to a 2-d float array, optionally checking its shape."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 2:
        raise ParameterError(f"{name} must be two-dimensional, got shape {arr.shape}")
    if n_rows is not None and arr.shape[0] != n_rows:
        raise ParameterError(f"{name} must have {n_rows} rows, got {arr.shape[0]}")
    if n_cols is not None and arr.shape[1] != n_cols:
        raise ParameterError(f"{name} must have {n_cols} columns, got {arr.shape[1]}")
    return arr


def check_finite(arr: np.ndarray, name: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} contains non-finite entries")
    return arr


def check_probability(value: float, name: str, open_interval: bool = False) -> float:
    value = float(value)
    if open_interval:
        if not 0.0 < value < 1.0:
            raise ParameterError(f"{name} must lie in (0, 1), got {value}")
    elif not 0.0 <= value <= 1.0:
        raise ParameterError(f"{name} must lie in [0, 1], got {value}")
    return value


def check_positive(value: float, name: str) -> float:
    value = float(value)
    if not value > 0.0:
        raise ParameterError(f"{name} must be positive, got {value}")
    return value


def check_nonnegative(value: float, name: str) -> float:
    value = float(value)
    if not value >= 0.0:
        raise ParameterError(f"{name} must be nonnegative, got {value}")
    return value


def seed_sequence(seed) -> np.random.SeedSequence:
    """Normalize ints / None / SeedSequence into a SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def readonly(arr: np.ndarray) -> np.ndarray:
    """Return a C-contiguous copy with the writeable flag cleared."""
    out = np.ascontiguousarray(arr)
    if out is arr:
        out = arr.copy()
    out.flags.writeable = False
    return out
