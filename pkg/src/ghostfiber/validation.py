"""Input validation helpers shared across the package."""

from __future__ import annotations

import numpy as np


class ConfigError(ValueError):
    """Bad configuration: unknown keys, out-of-range values, missing files."""


class DataError(RuntimeError):
    """Runtime data problem: missing records, unreadable inputs, broken alignment."""


def check_int_range(name: str, value, lo: int, hi: int) -> int:
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
        raise ValueError(f"{name} must be an integer, got {value!r}")
    if not lo <= value <= hi:
        raise ValueError(f"{name} must be in [{lo}, {hi}], got {value}")
    return int(value)


def check_positive(name: str, value) -> float:
    v = float(value)
    if not np.isfinite(v) or v <= 0.0:
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return v


def check_non_negative(name: str, value) -> float:
    v = float(value)
    if not np.isfinite(v) or v < 0.0:
        raise ValueError(f"{name} must be >= 0, got {value!r}")
    return v


def check_fraction(name: str, value) -> float:
    """Validate a value in (0, 1]."""
    v = float(value)
    if not 0.0 < v <= 1.0:
        raise ValueError(f"{name} must be in (0, 1], got {value!r}")
    return v


def as_float_vector(name: str, values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-d array, got shape {arr.shape}")
    return arr


def check_power_of_two_length(name: str, n: int) -> int:
    """Return k such that n == 2**k, or raise a shape error."""
    if n < 2 or (n & (n - 1)) != 0:
        raise ValueError(f"{name} length must be a power of two >= 2, got {n}")
    return int(n).bit_length() - 1


def frozen_array(values, dtype=float) -> np.ndarray:
    """Copy to a read-only ndarray (value-object fields)."""
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr
