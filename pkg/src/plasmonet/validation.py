"""Input validation helpers.

scikit-learn's ``check_array`` rejects complex input, so the estimators and
core routines here use these complex-aware equivalents instead. All helpers
raise :class:`ValidationError` with a message naming the offending argument.
"""

import numpy as np


class ValidationError(ValueError):
    """Invalid input data, configuration value, or file content."""


class NumericalError(RuntimeError):
    """A numerical procedure failed: divergence, non-convergence, overflow."""


class PhaseRangeError(ValidationError):
    """Requested phase falls outside the device's achievable window."""


def as_complex_array(x, name="x", ndim=None, shape=None):
    """Coerce to a finite complex ndarray, optionally checking ndim/shape."""
    arr = np.asarray(x, dtype=complex)
    if ndim is not None and arr.ndim != ndim:
        raise ValidationError(f"{name}: expected {ndim} dimensions, got {arr.ndim}")
    if shape is not None and arr.shape != tuple(shape):
        raise ValidationError(f"{name}: expected shape {tuple(shape)}, got {arr.shape}")
    if not np.all(np.isfinite(arr.real)) or not np.all(np.isfinite(arr.imag)):
        raise ValidationError(f"{name}: contains non-finite entries")
    return arr


def as_real_array(x, name="x", ndim=None):
    try:
        arr = np.asarray(x, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{name}: expected real values ({exc})") from exc
    if ndim is not None and arr.ndim != ndim:
        raise ValidationError(f"{name}: expected {ndim} dimensions, got {arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name}: contains non-finite entries")
    return arr


def check_square_matrix(m, name="matrix"):
    arr = as_complex_array(m, name, ndim=2)
    if arr.shape[0] != arr.shape[1]:
        raise ValidationError(f"{name}: expected square matrix, got {arr.shape}")
    return arr


def check_positive(value, name):
    if not np.isfinite(value) or value <= 0:
        raise ValidationError(f"{name}: must be positive, got {value!r}")
    return float(value)


def check_in_range(value, lo, hi, name):
    if not (lo <= value <= hi):
        raise ValidationError(f"{name}: must lie in [{lo}, {hi}], got {value!r}")
    return float(value)


def check_labels(y, n_classes, name="y"):
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise ValidationError(f"{name}: expected 1-d label array, got ndim={arr.ndim}")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == arr.astype(int)):
            raise ValidationError(f"{name}: labels must be integers")
        arr = arr.astype(int)
    if len(arr) and (arr.min() < 0 or arr.max() >= n_classes):
        raise ValidationError(
            f"{name}: labels must lie in [0, {n_classes}), got range "
            f"[{arr.min()}, {arr.max()}]"
        )
    return arr


def check_port_indices(ports, port_count, name="ports"):
    arr = np.asarray(ports, dtype=int)
    if arr.ndim != 1 or len(arr) == 0:
        raise ValidationError(f"{name}: expected a non-empty 1-d index list")
    if len(set(arr.tolist())) != len(arr):
        raise ValidationError(f"{name}: indices must be distinct")
    if arr.min() < 0 or arr.max() >= port_count:
        raise ValidationError(f"{name}: indices must lie in [0, {port_count})")
    return tuple(int(p) for p in arr)
