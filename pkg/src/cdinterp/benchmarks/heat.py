"""Heat kernel and its self-similar rescaling."""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError, InvalidTime
from ..fields import FieldFunction
from ..gaussian_ot import Gaussian


def _check_time(t: float) -> None:
    if not t > 0:
        raise InvalidTime(f"time must be positive, got {t}")


def as_points(x, n: int | None) -> np.ndarray:
    """Points of shape (..., n); for ``n == 1`` bare coordinates are accepted."""
    x = np.asarray(x, dtype=float)
    if n is None:
        return x if x.ndim else x.reshape(1)
    if n == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        return x[..., None]
    if x.ndim == 0 or x.shape[-1] != n:
        raise DimensionError(f"points must have trailing size {n}, got shape {x.shape}")
    return x


def heat_kernel(t: float, x, n: int | None = None) -> np.ndarray:
    """``K(t, x) = (4 pi t)^{-n/2} exp(-|x|^2 / 4t)``.

    ``x`` has shape (..., n); when ``n`` is omitted it is the trailing size.
    """
    _check_time(t)
    x = as_points(x, n)
    n = x.shape[-1]
    r2 = np.sum(x * x, axis=-1)
    return (4.0 * np.pi * t) ** (-0.5 * n) * np.exp(-r2 / (4.0 * t))


def heat_field(t: float, n: int = 1) -> FieldFunction:
    _check_time(t)
    return FieldFunction(lambda x: heat_kernel(t, x, n), dim=n)


def heat_gaussian(t: float, n: int = 1) -> Gaussian:
    """Exact moments of ``K(t, .)``: zero mean, covariance ``2 t I``."""
    _check_time(t)
    return Gaussian(np.zeros(n), 2.0 * t * np.eye(n))


def heat_rescaling(t, t0: float, t1: float):
    """``s(t) = (sqrt(t) - sqrt(t0)) / (sqrt(t1) - sqrt(t0))``."""
    _check_time(t0)
    if not t1 > t0:
        raise InvalidTime(f"need t1 > t0, got t0={t0}, t1={t1}")
    return (np.sqrt(t) - np.sqrt(t0)) / (np.sqrt(t1) - np.sqrt(t0))
