"""Input validation helpers shared by the estimators and the functional API."""
from __future__ import annotations

import numbers

import numpy as np

MODEL = "model"
STORAGE = "storage"
VALUE_SPACES = (MODEL, STORAGE)

_BOUNDS = {MODEL: (-1.0, 1.0), STORAGE: (0.0, 1.0)}


def check_value_space(value_space):
    if value_space not in VALUE_SPACES:
        raise ValueError(
            f"value_space must be one of {VALUE_SPACES}, got {value_space!r}")
    return value_space


def check_image_array(pixels, value_space=MODEL, *, min_size=1, name="image"):
    """Return `pixels` as a 2D float64 array, checking shape and range."""
    check_value_space(value_space)
    arr = np.asarray(pixels, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[0] == 1:
        arr = arr[0]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2D grid, got shape {arr.shape}")
    if arr.shape[0] < min_size or arr.shape[1] < min_size:
        raise ValueError(
            f"{name} must be at least {min_size}x{min_size}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    lo, hi = _BOUNDS[value_space]
    if arr.min() < lo or arr.max() > hi:
        raise ValueError(
            f"{name} values must lie in [{lo}, {hi}] for the "
            f"{value_space!r} value space, got [{arr.min()}, {arr.max()}]")
    return arr


def check_positive_int(value, name, *, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_positive_float(value, name, *, allow_zero=False):
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise TypeError(f"{name} must be a number, got {type(value).__name__}")
    value = float(value)
    if not np.isfinite(value) or value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise ValueError(f"{name} must be {bound}, got {value}")
    return value


def check_random_state(seed):
    """Turn `seed` into a `numpy.random.Generator`."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, numbers.Integral):
        return np.random.default_rng(seed)
    raise TypeError(f"cannot build a random generator from {seed!r}")
