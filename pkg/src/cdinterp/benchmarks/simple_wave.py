"""Isentropic simple wave with a constant left-going Riemann invariant.

With ``R- = 2a/(gamma - 1) - u = c`` everywhere, the right-going
characteristics ``X(t, xi) = xi + (u0(xi) + a0(xi)) t`` are straight lines
along which the state is constant.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from ..errors import CharacteristicsCrossed, InvalidField, InvalidTime
from ..fields import FieldFunction

__all__ = [
    "SimpleWaveProblem",
    "simple_wave_solution",
    "characteristic",
    "velocity_field",
    "paper_simple_wave",
]

FOOT_TOL = 1e-12
_MAX_EXPANSIONS = 60


@dataclass(frozen=True, eq=False)
class SimpleWaveProblem:
    """Initial sound speed ``a0``, invariant constant ``c`` and ratio ``gamma``.

    ``window`` is the interval of feet on which non-crossing of the
    characteristics is checked.
    """

    a0: Callable[[np.ndarray], np.ndarray]
    c: float = 1.0
    gamma: float = 1.4
    window: tuple[float, float] = (-50.0, 50.0)

    def __post_init__(self):
        if not self.gamma > 1.0:
            raise InvalidField(f"gamma must exceed 1, got {self.gamma}")

    @property
    def k(self) -> float:
        return 2.0 / (self.gamma - 1.0)

    def u0(self, xi):
        return self.k * self.a0(xi) - self.c

    def speed(self, xi):
        """Right-going characteristic speed ``u0 + a0`` at the foot."""
        return (self.k + 1.0) * self.a0(xi) - self.c

    @cached_property
    def breaking_time(self) -> float:
        """First time at which ``dX/dxi`` vanishes somewhere in ``window``."""
        xi = np.linspace(*self.window, 200001)
        ds = np.gradient(np.asarray(self.speed(xi), dtype=float), xi)
        worst = float(ds.min())
        # ignore rounding noise where the speed is flat
        if worst >= -1e-9 * max(1.0, float(np.abs(ds).max())):
            return np.inf
        return -1.0 / worst


def characteristic(p: SimpleWaveProblem, t: float, xi):
    """``X(t, xi) = xi + (u0(xi) + a0(xi)) t``."""
    xi = np.asarray(xi, dtype=float)
    return xi + p.speed(xi) * t


def _foot(p: SimpleWaveProblem, t: float, x: np.ndarray) -> np.ndarray:
    def g(xi):
        return characteristic(p, t, xi) - x

    lo, hi = x.copy(), x.copy()
    step = np.ones_like(x)
    # expand geometrically until g(lo) <= 0 <= g(hi)
    for _ in range(_MAX_EXPANSIONS):
        need_lo = g(lo) > 0
        need_hi = g(hi) < 0
        if not (need_lo.any() or need_hi.any()):
            break
        lo = np.where(need_lo, lo - step, lo)
        hi = np.where(need_hi, hi + step, hi)
        step *= 2.0
    else:
        raise CharacteristicsCrossed("could not bracket the characteristic foot")
    for _ in range(200):
        if np.all(hi - lo <= FOOT_TOL):
            break
        mid = 0.5 * (lo + hi)
        below = g(mid) < 0
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def simple_wave_solution(p: SimpleWaveProblem, t: float, x) -> tuple[np.ndarray, np.ndarray]:
    """Velocity and sound speed ``(u, a)`` at time ``t`` and positions ``x``."""
    if t < 0:
        raise InvalidTime(f"time must be nonnegative, got {t}")
    x = np.asarray(x, dtype=float)
    if t == 0:
        xi = x
    else:
        if t >= p.breaking_time:
            raise CharacteristicsCrossed(f"characteristics cross at t={p.breaking_time:.6g} <= {t}")
        xi = _foot(p, t, x.reshape(-1)).reshape(x.shape)
    a = np.asarray(p.a0(xi), dtype=float)
    return p.k * a - p.c, a


def velocity_field(p: SimpleWaveProblem, t: float) -> FieldFunction:
    """Scalar 1D field ``x -> u(t, x)``."""
    return FieldFunction(lambda x: simple_wave_solution(p, t, x[..., 0])[0], dim=1)


def paper_simple_wave() -> SimpleWaveProblem:
    """``a0 = 2 + tanh((x + 1) / 0.2)``, ``c = 1``, ``gamma = 7/5``."""
    return SimpleWaveProblem(lambda x: 2.0 + np.tanh((np.asarray(x) + 1.0) / 0.2), c=1.0, gamma=1.4)
