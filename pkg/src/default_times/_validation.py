"""Input validation helpers shared by the estimators and the functional API."""

import numbers

import numpy as np

from .exceptions import InvalidInputError


def check_scalar(x, name, *, lower=None, upper=None, lower_inclusive=True,
                 upper_inclusive=True, integer=False):
    """Validate a finite real (or integer) scalar and return it as a Python number."""
    if integer:
        if isinstance(x, bool) or not isinstance(x, numbers.Integral):
            raise InvalidInputError(f"{name} must be an integer, got {x!r}")
        x = int(x)
    else:
        if isinstance(x, bool) or not isinstance(x, numbers.Real):
            raise InvalidInputError(f"{name} must be a real number, got {x!r}")
        x = float(x)
        if not np.isfinite(x):
            raise InvalidInputError(f"{name} must be finite, got {x!r}")
    if lower is not None:
        bad = x < lower if lower_inclusive else x <= lower
        if bad:
            op = ">=" if lower_inclusive else ">"
            raise InvalidInputError(f"{name} must be {op} {lower}, got {x!r}")
    if upper is not None:
        bad = x > upper if upper_inclusive else x >= upper
        if bad:
            op = "<=" if upper_inclusive else "<"
            raise InvalidInputError(f"{name} must be {op} {upper}, got {x!r}")
    return x


def check_time_in_period(t, N, name="t", tol=1e-12):
    """Validate ``0 <= t <= N``; values within ``tol*N`` of an end are snapped onto it."""
    t = check_scalar(t, name)
    slack = tol * max(1.0, abs(N))
    if t < -slack or t > N + slack:
        raise InvalidInputError(f"{name} must lie in [0, {N}], got {t!r}")
    return min(max(t, 0.0), N)


def check_square_matrix(a, name, *, min_size=1):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInputError(f"{name} must be a square matrix, got shape {a.shape}")
    if a.shape[0] < min_size:
        raise InvalidInputError(f"{name} must be at least {min_size}x{min_size}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return a


def check_grid(values, name, *, lower=0.0, lower_inclusive=False):
    """Validate a 1-d grid of finite values, returning a sorted unique float array."""
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidInputError(f"{name} must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} has non-finite entries")
    bad = arr < lower if lower_inclusive else arr <= lower
    if np.any(bad):
        op = ">=" if lower_inclusive else ">"
        raise InvalidInputError(f"all {name} values must be {op} {lower}")
    return np.unique(arr)
