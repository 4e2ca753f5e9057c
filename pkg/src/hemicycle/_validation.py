"""Input validation helpers shared by the public entry points."""

from __future__ import annotations

import math

import numpy as np


def check_finite_scalar(v, name: str) -> float:
    try:
        v = float(v)
    except (TypeError, ValueError) as exc:
        raise TypeError(f"{name} must be a real number") from exc
    if not math.isfinite(v):
        raise ValueError(f"{name} must be finite, got {v}")
    return v


def check_positive(v, name: str) -> float:
    v = check_finite_scalar(v, name)
    if v <= 0:
        raise ValueError(f"{name} must be positive, got {v}")
    return v


def as_sample_vector(x, name: str) -> np.ndarray:
    """Coerce ``x`` to a finite 1-d float array; ``(m, 1)`` columns are flattened."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_interval(lo: float, hi: float, name: str = "interval") -> tuple[float, float]:
    lo = check_finite_scalar(lo, f"{name} lower bound")
    hi = check_finite_scalar(hi, f"{name} upper bound")
    if not lo < hi:
        raise ValueError(f"{name} must satisfy lo < hi, got ({lo}, {hi})")
    return lo, hi
