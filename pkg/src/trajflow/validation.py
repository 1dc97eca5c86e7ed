"""Input checks shared by the estimators."""
from __future__ import annotations

from numbers import Real
from typing import Iterable

import numpy as np

from .geom import LineString, Trajectory


def check_positive(name: str, value, *, integer: bool = False, allow_zero: bool = False):
    if isinstance(value, bool) or not isinstance(value, Real):
        raise TypeError(f"{name} must be a number, got {type(value).__name__}")
    if integer and int(value) != value:
        raise ValueError(f"{name} must be an integer, got {value!r}")
    if value < 0 or (value == 0 and not allow_zero):
        raise ValueError(f"{name} must be {'non-negative' if allow_zero else 'positive'}, got {value!r}")
    return int(value) if integer else float(value)


def check_lines(X: Iterable, *, name: str = "X") -> list[LineString]:
    """Accept linestrings or ``(n, 2)`` coordinate arrays."""
    if X is None:
        raise ValueError(f"{name} is None")
    out = []
    for i, x in enumerate(X):
        if isinstance(x, LineString):
            out.append(x)
            continue
        arr = np.asarray(x, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError(f"{name}[{i}] must be an (n, 2) coordinate array")
        if not np.isfinite(arr).all():
            raise ValueError(f"{name}[{i}] has non-finite coordinates")
        out.append(LineString(arr))
    if not out:
        raise ValueError(f"{name} is empty")
    return out


def check_trajectories(X: Iterable, *, name: str = "X") -> list[Trajectory]:
    """Accept trajectories or ``(n, 2)`` arrays (ids become positions)."""
    if X is None:
        raise ValueError(f"{name} is None")
    out = []
    for i, x in enumerate(X):
        if isinstance(x, Trajectory):
            out.append(x)
            continue
        arr = np.asarray(x, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2 or not np.isfinite(arr).all():
            raise ValueError(f"{name}[{i}] must be a finite (n, 2) coordinate array")
        out.append(Trajectory(str(i), [tuple(p) for p in arr]))
    if not out:
        raise ValueError(f"{name} is empty")
    return out
