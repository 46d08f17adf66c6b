"""Small input-validation helpers used at every public entry point.

All numerical code in this package works on contiguous float64 arrays;
these helpers coerce and check once at the boundary so the math inside
can stay assertion-free.
"""

from __future__ import annotations

import numpy as np

from .exceptions import ConfigurationError, NumericError, ShapeError


def as_vector(x, name: str = "x") -> np.ndarray:
    """Coerce to a contiguous float64 1-D array and require finiteness."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains non-finite entries")
    return arr


def as_matrix(x, name: str = "x") -> np.ndarray:
    """Coerce to a contiguous float64 2-D array and require finiteness."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains non-finite entries")
    return arr


def as_labels(y, name: str = "labels") -> np.ndarray:
    arr = np.ascontiguousarray(y, dtype=np.int64)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {arr.shape}")
    return arr


def check_positive(value: float, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0.0:
        raise ConfigurationError(f"{name} must be positive and finite, got {value!r}")
    return value


def check_in_unit_interval(value: float, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value < 0.0 or value > 1.0:
        raise ConfigurationError(f"{name} must lie in [0, 1], got {value!r}")
    return value


def check_same_rows(a: np.ndarray, b: np.ndarray, name_a: str, name_b: str) -> None:
    if a.shape[0] != b.shape[0]:
        raise ShapeError(
            f"{name_a} and {name_b} disagree on row count: "
            f"{a.shape[0]} vs {b.shape[0]}"
        )
