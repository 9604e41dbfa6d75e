"""Input validation helpers shared by the estimators and the engine."""

from __future__ import annotations

import math

import numpy as np

from .exceptions import InvalidArgumentError


def check_positive(value, name, *, allow_zero=False):
    """Return ``value`` as a float after checking it is finite and > 0 (or >= 0)."""
    try:
        value = float(value)
    except (TypeError, ValueError) as exc:
        raise InvalidArgumentError(f"{name} must be a number, got {value!r}") from exc
    if math.isnan(value) or math.isinf(value):
        raise InvalidArgumentError(f"{name} must be finite, got {value}")
    if value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise InvalidArgumentError(f"{name} must be {bound}, got {value}")
    return value


def check_unit_interval(value, name, *, closed_right=False):
    value = float(value)
    upper_ok = value <= 1.0 if closed_right else value < 1.0
    if not (value > 0.0 and upper_ok):
        bracket = "(0, 1]" if closed_right else "(0, 1)"
        raise InvalidArgumentError(f"{name} must lie in {bracket}, got {value}")
    return value


def check_vector(values, name, n=None, *, allow_zero=False, allow_inf=False):
    """Coerce to a 1-d float array and check sign/length constraints."""
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.ndim != 1:
        raise InvalidArgumentError(f"{name} must be one-dimensional")
    if n is not None and arr.shape[0] != n:
        raise InvalidArgumentError(f"{name} must have length {n}, got {arr.shape[0]}")
    if np.isnan(arr).any():
        raise InvalidArgumentError(f"{name} contains NaN")
    if not allow_inf and np.isinf(arr).any():
        raise InvalidArgumentError(f"{name} must be finite")
    if allow_zero:
        if (arr < 0).any():
            raise InvalidArgumentError(f"{name} must be nonnegative")
    elif (arr <= 0).any():
        raise InvalidArgumentError(f"{name} must be strictly positive")
    return arr


def check_budget(budget):
    """Normalise a budget: ``None``/``inf``/"unlimited" mean unlimited."""
    if budget is None:
        return math.inf
    if isinstance(budget, str):
        if budget.strip().lower() == "unlimited":
            return math.inf
        budget = float(budget)
    budget = float(budget)
    if math.isnan(budget):
        raise InvalidArgumentError("budget must not be NaN")
    return budget


def check_time_order(now, previous, name="now"):
    if now < previous:
        raise InvalidArgumentError(
            f"{name}={now} precedes the previous time {previous}; time must be non-decreasing"
        )
    return now
