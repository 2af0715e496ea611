"""Input coercion helpers shared by the estimator classes."""
import numbers

import numpy as np
import pandas as pd
from sklearn.utils.validation import check_array

from .exceptions import DataValidationError, DegenerateInputError
from .panel import MonthlyPanel


def check_panel(X) -> MonthlyPanel:
    """Accept a :class:`MonthlyPanel` or a months x stocks DataFrame."""
    if isinstance(X, MonthlyPanel):
        return X
    if isinstance(X, pd.DataFrame):
        return MonthlyPanel.from_frame(X)
    raise TypeError(f"expected MonthlyPanel or DataFrame, got {type(X).__name__}")


def check_series(y, *, min_length=2, name="series", allow_constant=False) -> np.ndarray:
    """Return ``y`` as a finite 1-d float array of at least ``min_length`` points."""
    if isinstance(y, (pd.Series, pd.DataFrame)):
        y = y.to_numpy()
    arr = np.asarray(y, dtype=float)
    if arr.ndim == 2 and 1 in arr.shape:
        arr = arr.ravel()
    if arr.ndim != 1:
        raise DataValidationError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size < min_length:
        raise DegenerateInputError(f"{name} needs at least {min_length} observations, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise DataValidationError(f"{name} contains NaN or infinite values")
    if not allow_constant and np.ptp(arr) == 0:
        raise DegenerateInputError(f"{name} is constant")
    return arr


def check_design(X, n_rows=None) -> np.ndarray:
    X = check_array(X, ensure_2d=True, dtype=np.float64, ensure_all_finite=True)
    if n_rows is not None and X.shape[0] != n_rows:
        raise DataValidationError(f"design has {X.shape[0]} rows, response has {n_rows}")
    return X


def check_int(value, name, minimum=None):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise DataValidationError(f"{name} must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise DataValidationError(f"{name} must be >= {minimum}, got {value}")
    return int(value)
