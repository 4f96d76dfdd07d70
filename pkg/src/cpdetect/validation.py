"""Input validation helpers and the package error taxonomy.

Every public entry point funnels its array arguments through these checks so
that the numerical core can assume dense, finite, float64, C-ordered data.
"""

import numpy as np

__all__ = [
    "CpdetectError",
    "ValidationError",
    "FormatError",
    "NumericError",
    "check_vector",
    "check_matrix",
    "check_tensor3",
    "check_feature_map",
]


class CpdetectError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(CpdetectError, ValueError):
    """An input violates a documented precondition or invariant."""


class FormatError(CpdetectError, ValueError):
    """A serialized file is malformed; the message names the offending
    byte offset or field."""


class NumericError(CpdetectError, ArithmeticError):
    """An internal numerical computation failed irrecoverably."""


def _as_finite_f64(a, name):
    arr = np.asarray(a, dtype=np.float64)
    if arr.size and not np.isfinite(arr).all():
        raise ValidationError(f"{name} contains non-finite values")
    return np.ascontiguousarray(arr)


def check_vector(a, name="vector"):
    """Coerce to a finite float64 1-D array of length >= 1."""
    arr = _as_finite_f64(a, name)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    if arr.size < 1:
        raise ValidationError(f"{name} must be non-empty")
    return arr


def check_matrix(a, name="matrix"):
    """Coerce to a finite float64 2-D array with positive extents."""
    arr = _as_finite_f64(a, name)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise ValidationError(f"{name} must have positive extents, got {arr.shape}")
    return arr


def check_tensor3(a, name="tensor"):
    """Coerce to a finite float64 order-3 array with positive extents.

    Layout is fixed axis-major: axis 0 slowest, axis 2 fastest (C order).
    All tensor code in the package relies on this single convention.
    """
    arr = _as_finite_f64(a, name)
    if arr.ndim != 3:
        raise ValidationError(f"{name} must be 3-dimensional, got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise ValidationError(f"{name} must have positive extents, got {arr.shape}")
    return arr


def check_feature_map(a, channels=None, name="feature map"):
    """Validate a feature map: an order-3 (height, width, channels) array."""
    arr = check_tensor3(a, name)
    if channels is not None and arr.shape[2] != channels:
        raise ValidationError(
            f"{name} has {arr.shape[2]} channels, expected {channels}"
        )
    return arr
