"""Input validation helpers shared by the estimators and functions."""

import numpy as np
from sklearn.utils.validation import check_array, check_X_y

from .exceptions import StructuralError


def check_design(X):
    """Finite 2-D float design matrix with at least one row and column."""
    try:
        return check_array(X, dtype=np.float64, ensure_2d=True, ensure_all_finite=True, copy=False)
    except ValueError as exc:
        raise StructuralError(str(exc)) from exc


def check_xy(X, y):
    """Validate a design matrix and response vector of matching length."""
    try:
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True, ensure_all_finite=True)
    except ValueError as exc:
        raise StructuralError(str(exc)) from exc
    return X, y.astype(np.float64)


def check_index_sets(sets, p, name="index set"):
    """Normalise a collection of index sets to sorted tuples within ``range(p)``."""
    out = []
    for s in sets or ():
        t = tuple(sorted({int(i) for i in s}))
        if not t:
            raise StructuralError(f"empty {name}")
        if t[0] < 0 or t[-1] >= p:
            raise StructuralError(f"{name} {t} references a column outside 0..{p - 1}")
        out.append(t)
    return out
