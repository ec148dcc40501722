"""Input validation helpers shared by the estimator and dataset layers."""

from __future__ import annotations

import numpy as np

from .exceptions import DataIntegrityError, ShapeError


def check_instance_matrix(values, *, name: str = "values") -> np.ndarray:
    """Validate one T x F instance matrix and return it as float32.

    Requires T >= 2, F >= 1 and all entries finite.
    """
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-d (T x F), got ndim={arr.ndim}")
    t, f = arr.shape
    if t < 2:
        raise ShapeError(f"{name} needs at least 2 timestamps, got T={t}")
    if f < 1:
        raise ShapeError(f"{name} needs at least 1 feature, got F={f}")
    if not np.isfinite(arr).all():
        raise DataIntegrityError(f"{name} contains NaN or Inf entries")
    return arr


def check_series_array(X, *, name: str = "X") -> np.ndarray:
    """Validate a batch of instances shaped (N, T, F) and return float32."""
    arr = np.asarray(X, dtype=np.float32)
    if arr.ndim != 3:
        raise ShapeError(f"{name} must be 3-d (N x T x F), got ndim={arr.ndim}")
    if arr.shape[0] < 1:
        raise ShapeError(f"{name} is empty")
    check_instance_matrix(arr[0], name=f"{name}[0]")
    if not np.isfinite(arr).all():
        raise DataIntegrityError(f"{name} contains NaN or Inf entries")
    return arr


def check_point_labels(labels, n_timestamps: int) -> np.ndarray:
    arr = np.asarray(labels, dtype=bool)
    if arr.ndim != 1 or arr.shape[0] != n_timestamps:
        raise ShapeError(
            f"point labels must be 1-d of length {n_timestamps}, got shape {arr.shape}"
        )
    return arr
