"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""

import numpy as np

from .errors import InvalidArgumentError


def check_finite(x, name="input"):
    x = np.asarray(x)
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError(f"{name} contains non-finite values")
    return x


def check_image(image, name="image"):
    """Return ``image`` as a finite 2-D float64 array."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidArgumentError(f"{name} must be a 2-D grid, got shape {arr.shape}")
    return check_finite(arr, name)


def check_stack(x, name="input", ndim=3):
    """Validate a batch of 2-D grids, promoting a single grid to a batch of one.

    Returns the array and whether the input was a single grid.
    """
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == ndim - 1
    if single:
        arr = arr[None]
    if arr.ndim != ndim:
        raise InvalidArgumentError(f"{name} must have {ndim - 1} or {ndim} dims, got {arr.ndim}")
    if arr.shape[0] == 0:
        raise InvalidArgumentError(f"{name} is empty")
    return check_finite(arr, name), single


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or int(value) != value or value < minimum:
        raise InvalidArgumentError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_divisible(shape, factor, name="input"):
    for dim in shape:
        if dim % factor:
            raise InvalidArgumentError(f"{name} dims {tuple(shape)} not divisible by {factor}")
