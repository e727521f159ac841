"""Steady supersonic flow over a wedge with an attached oblique shock.

Angles are in radians. The shock angle ``theta`` and wedge angle ``delta``
are linked by

    cot(delta) = tan(theta) ((gamma + 1) M^2 / (2 (M^2 sin^2 theta - 1)) - 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from ..errors import DetachedShock, InvalidField, MapSingular
from ..fields import FieldFunction

__all__ = [
    "WedgeProblem",
    "deflection_angle",
    "max_deflection",
    "wedge_shock_angle",
    "downstream_mach",
    "shock_relation_residuals",
    "wedge_mach_field",
    "wedge_lambda",
    "wedge_theta",
    "wedge_phi",
    "wedge_geometry_maps",
]


@dataclass(frozen=True)
class WedgeProblem:
    mach_upstream: float
    delta: float
    gamma: float = 1.4

    def __post_init__(self):
        if not self.mach_upstream > 1:
            raise InvalidField(f"upstream flow must be supersonic, got M={self.mach_upstream}")
        if not 0 <= self.delta < math.pi / 2:
            raise InvalidField(f"wedge angle must lie in [0, pi/2), got {self.delta}")
        if not self.gamma > 1:
            raise InvalidField("gamma must exceed 1")

    @classmethod
    def from_degrees(cls, mach: float, delta_deg: float, gamma: float = 1.4) -> WedgeProblem:
        return cls(mach, math.radians(delta_deg), gamma)


def deflection_angle(theta: float, mach: float, gamma: float = 1.4) -> float:
    """Wedge angle that supports a shock at angle ``theta`` (0 at the Mach angle)."""
    ms2 = (mach * math.sin(theta)) ** 2
    if ms2 <= 1.0:
        return 0.0
    num = 2.0 * (ms2 - 1.0) / math.tan(theta)
    den = mach**2 * (gamma + math.cos(2.0 * theta)) + 2.0
    return math.atan(num / den)


def _mach_angle(mach: float) -> float:
    return math.asin(1.0 / mach)


def max_deflection(mach: float, gamma: float = 1.4) -> tuple[float, float]:
    """Return ``(theta_max, delta_max)``, the detachment point."""
    res = minimize_scalar(
        lambda th: -deflection_angle(th, mach, gamma),
        bounds=(_mach_angle(mach), math.pi / 2),
        method="bounded",
        options={"xatol": 1e-12},
    )
    return float(res.x), -float(res.fun)


def downstream_mach(p: WedgeProblem, theta: float) -> float:
    g, m = p.gamma, p.mach_upstream
    mn2 = (m * math.sin(theta)) ** 2
    mdn2 = ((g - 1.0) * mn2 + 2.0) / (2.0 * g * mn2 - (g - 1.0))
    return math.sqrt(mdn2) / math.sin(theta - p.delta)


def wedge_shock_angle(p: WedgeProblem) -> tuple[float, float]:
    """Weak-branch shock angle and downstream Mach number ``(theta, M_d)``."""
    mu = _mach_angle(p.mach_upstream)
    if p.delta == 0.0:
        return mu, p.mach_upstream
    theta_max, delta_max = max_deflection(p.mach_upstream, p.gamma)
    if p.delta >= delta_max:
        raise DetachedShock(
            f"wedge angle {math.degrees(p.delta):.4f} deg exceeds detachment angle "
            f"{math.degrees(delta_max):.4f} deg for M={p.mach_upstream}"
        )
    theta = brentq(
        lambda th: deflection_angle(th, p.mach_upstream, p.gamma) - p.delta,
        mu + 1e-9,
        theta_max,
        xtol=1e-15,
        rtol=4 * np.finfo(float).eps,
        maxiter=500,
    )
    return float(theta), downstream_mach(p, theta)


def shock_relation_residuals(p: WedgeProblem, theta: float, mach_d: float) -> tuple[float, float]:
    """Residuals of the shock-angle relation and of the downstream Mach relation."""
    g, m = p.gamma, p.mach_upstream
    ms2 = (m * math.sin(theta)) ** 2
    r1 = 1.0 / math.tan(p.delta) - math.tan(theta) * ((g + 1.0) * m**2 / (2.0 * (ms2 - 1.0)) - 1.0)
    rhs = ((g - 1.0) * ms2 + 2.0) / (2.0 * g * ms2 - (g - 1.0))
    r2 = (mach_d * math.sin(theta - p.delta)) ** 2 - rhs
    return r1, r2


def wedge_mach_field(p: WedgeProblem) -> FieldFunction:
    """Piecewise-constant Mach number: upstream value ahead of the shock, downstream behind."""
    theta, mach_d = wedge_shock_angle(p)
    tan_t = math.tan(theta)
    mach_u = p.mach_upstream

    def fn(x):
        x1, x2 = x[..., 0], x[..., 1]
        ahead = (x1 < 0) | (x2 > x1 * tan_t)
        return np.where(ahead, mach_u, mach_d)

    return FieldFunction(fn, dim=2)


def _denominator(x1, delta: float):
    d = 1.0 - np.maximum(x1, 0.0) * math.tan(delta)
    if np.any(d <= 0):
        raise MapSingular(f"1 - x1 tan(delta) <= 0 for delta={delta}")
    return d


def wedge_lambda(x, delta: float) -> np.ndarray:
    """Map the reference rectangle onto the flow region above the wedge of angle ``delta``.

    ``x2 -> x1 tan(delta) + (1 - x1 tan(delta)) x2`` for ``x1 >= 0``, identity otherwise.
    """
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    tan_d = math.tan(delta)
    d = _denominator(x1, delta)
    y2 = np.where(x1 < 0, x2, x2 * d + np.maximum(x1, 0.0) * tan_d)
    return np.stack([x1, y2], axis=-1)


def wedge_theta(x, delta: float) -> np.ndarray:
    """Inverse of :func:`wedge_lambda`."""
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    tan_d = math.tan(delta)
    d = _denominator(x1, delta)
    y2 = np.where(x1 < 0, x2, (x2 - np.maximum(x1, 0.0) * tan_d) / d)
    return np.stack([x1, y2], axis=-1)


def wedge_phi(x, delta: float, delta_bar: float) -> np.ndarray:
    """Map the flow region of the wedge ``delta_bar`` onto that of ``delta``."""
    return wedge_lambda(wedge_theta(x, delta_bar), delta)


def wedge_geometry_maps(delta: float, delta_bar: float):
    """Closures ``(Lambda, Theta, Phi)`` for the given pair of wedge angles."""
    for a in (delta, delta_bar):
        if not abs(a) < math.pi / 2:
            raise MapSingular(f"wedge angle {a} out of range")
    return (
        lambda x: wedge_lambda(x, delta),
        lambda x: wedge_theta(x, delta),
        lambda x: wedge_phi(x, delta, delta_bar),
    )
