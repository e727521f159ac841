"""Zel'dovich-Kompaneets-Barenblatt profile of the porous-medium equation."""

from __future__ import annotations

import numpy as np

from ..errors import InvalidExponent, InvalidTime
from ..fields import FieldFunction
from ..gaussian_ot import Gaussian
from .heat import as_points


def zkb_exponents(n: int, m: int) -> tuple[float, float, float]:
    """Return ``(alpha, beta, k)`` for dimension ``n`` and exponent ``m``."""
    if int(m) != m or m <= 1:
        raise InvalidExponent(f"m must be an integer > 1, got {m}")
    alpha = n / (n * (m - 1) + 2)
    beta = alpha / n
    k = (m - 1) * alpha / (2 * m * n)
    return alpha, beta, k


def zkb_profile(t: float, x, n: int | None = None, m: int = 2, C: float = 1.0) -> np.ndarray:
    """``B(t, x) = t^-alpha ((C - k |x|^2 t^-2beta)^+)^(1/(m-1))`` at points (..., n)."""
    if not t > 0:
        raise InvalidTime(f"time must be positive, got {t}")
    if not C > 0:
        raise InvalidExponent(f"C must be positive, got {C}")
    x = as_points(x, n)
    n = x.shape[-1]
    alpha, beta, k = zkb_exponents(n, m)
    r2 = np.sum(x * x, axis=-1)
    core = np.maximum(C - k * r2 * t ** (-2.0 * beta), 0.0)
    return t ** (-alpha) * core ** (1.0 / (m - 1))


def zkb_field(t: float, n: int = 1, m: int = 2, C: float = 1.0) -> FieldFunction:
    return FieldFunction(lambda x: zkb_profile(t, x, n, m, C), dim=n)


def zkb_support_radius(t: float, n: int = 1, m: int = 2, C: float = 1.0) -> float:
    _, beta, k = zkb_exponents(n, m)
    return float(np.sqrt(C / k) * t**beta)


def zkb_gaussian(t: float, n: int = 1, m: int = 2, C: float = 1.0) -> Gaussian:
    """Exact first and second moments of ``B(t, .)`` viewed as a density.

    For a radial density ``(1 - |y|^2)^p`` on the unit ball each coordinate
    has variance ``1 / (n + 2p + 2)``.
    """
    radius = zkb_support_radius(t, n, m, C)
    p = 1.0 / (m - 1)
    return Gaussian(np.zeros(n), radius**2 / (n + 2.0 * p + 2.0) * np.eye(n))


def zkb_rescaling(t, t0: float, t1: float, n: int = 1, m: int = 2):
    """``s(t) = (t^beta - t0^beta) / (t1^beta - t0^beta)``."""
    if not (0 < t0 < t1):
        raise InvalidTime(f"need 0 < t0 < t1, got t0={t0}, t1={t1}")
    _, beta, _ = zkb_exponents(n, m)
    return (np.power(t, beta) - t0**beta) / (t1**beta - t0**beta)
