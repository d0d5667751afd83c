"""Small input-validation helpers in the spirit of ``sklearn.utils.validation``."""
import math
import numbers

import numpy as np

from .exceptions import ValidationError


def check_probability(value, name, *, open_low=False, open_high=False):
    """Return ``value`` as float after checking it lies in [0, 1]."""
    if not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise ValidationError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    lo_ok = value > 0.0 if open_low else value >= 0.0
    hi_ok = value < 1.0 if open_high else value <= 1.0
    if not (lo_ok and hi_ok) or math.isnan(value):
        raise ValidationError(f"{name} must lie in the unit interval, got {value}")
    return value


def check_positive_int(value, name, *, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ValidationError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ValidationError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_probability_array(arr, name):
    arr = np.asarray(arr, dtype=float)
    if arr.size and (np.isnan(arr).any() or arr.min() < 0.0 or arr.max() > 1.0):
        raise ValidationError(f"{name} entries must lie in [0, 1]")
    return arr


def check_same_shape(a, b, names=("a", "b")):
    if np.shape(a) != np.shape(b):
        raise ValidationError(
            f"{names[0]} and {names[1]} must share a shape: {np.shape(a)} != {np.shape(b)}"
        )


def check_rng(rng):
    """Turn ``None``/int seeds into a ``numpy.random.Generator``."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None or isinstance(rng, numbers.Integral):
        return np.random.default_rng(rng)
    raise ValidationError(f"cannot build a random generator from {rng!r}")
