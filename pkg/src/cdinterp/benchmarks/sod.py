"""Exact solution of the Riemann problem for the 1D Euler equations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from ..errors import InvalidField, InvalidTime, NoConvergence, VacuumError

__all__ = ["RiemannState", "star_state", "sod_exact", "sod_state", "wave_speeds"]

NEWTON_MAX_ITER = 100
NEWTON_RTOL = 1e-15


@dataclass(frozen=True)
class RiemannState:
    """Left and right primitive states ``(rho, u, p)`` and the ratio ``gamma``."""

    rho_l: float
    u_l: float
    p_l: float
    rho_r: float
    u_r: float
    p_r: float
    gamma: float = 1.4

    def __post_init__(self):
        if min(self.rho_l, self.rho_r, self.p_l, self.p_r) <= 0:
            raise InvalidField("densities and pressures must be positive")
        if not self.gamma > 1:
            raise InvalidField("gamma must exceed 1")

    @property
    def a_l(self) -> float:
        return float(np.sqrt(self.gamma * self.p_l / self.rho_l))

    @property
    def a_r(self) -> float:
        return float(np.sqrt(self.gamma * self.p_r / self.rho_r))


def sod_state() -> RiemannState:
    return RiemannState(1.0, 0.0, 1.0, 0.125, 0.0, 0.1, 1.4)


def _side(p: float, rho: float, pk: float, a: float, g: float) -> tuple[float, float]:
    """Pressure function of one side and its derivative."""
    if p > pk:
        A = 2.0 / ((g + 1.0) * rho)
        B = (g - 1.0) / (g + 1.0) * pk
        q = np.sqrt(A / (p + B))
        return (p - pk) * q, q * (1.0 - 0.5 * (p - pk) / (B + p))
    r = (p / pk) ** ((g - 1.0) / (2.0 * g))
    f = 2.0 * a / (g - 1.0) * (r - 1.0)
    return f, (p / pk) ** (-(g + 1.0) / (2.0 * g)) / (rho * a)


def star_state(st: RiemannState) -> tuple[float, float]:
    """Star-region pressure and velocity ``(p*, u*)``."""
    g = st.gamma
    a_l, a_r = st.a_l, st.a_r
    du = st.u_r - st.u_l
    if 2.0 / (g - 1.0) * (a_l + a_r) <= du:
        raise VacuumError("initial data generate a vacuum")

    def f(p):
        fl, dl = _side(p, st.rho_l, st.p_l, a_l, g)
        fr, dr = _side(p, st.rho_r, st.p_r, a_r, g)
        return fl + fr + du, dl + dr

    # two-rarefaction guess
    z = (g - 1.0) / (2.0 * g)
    p = ((a_l + a_r - 0.5 * (g - 1.0) * du) / (a_l / st.p_l**z + a_r / st.p_r**z)) ** (1.0 / z)
    for _ in range(NEWTON_MAX_ITER):
        val, der = f(p)
        p_new = p - val / der
        if not p_new > 0:
            p = _bisect_pressure(lambda q: f(q)[0], st)
            break
        change = abs(p_new - p) / (0.5 * (p_new + p))
        p = p_new
        if change <= NEWTON_RTOL or val == 0.0:
            break
    else:
        raise NoConvergence(f"Newton iteration did not converge in {NEWTON_MAX_ITER} steps")
    fl, _ = _side(p, st.rho_l, st.p_l, a_l, g)
    fr, _ = _side(p, st.rho_r, st.p_r, a_r, g)
    u = 0.5 * (st.u_l + st.u_r) + 0.5 * (fr - fl)
    return float(p), float(u)


def _bisect_pressure(fp, st: RiemannState) -> float:
    lo = 1e-14 * min(st.p_l, st.p_r)
    hi = max(st.p_l, st.p_r)
    while fp(hi) < 0:
        hi *= 2.0
    return brentq(fp, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps)


def wave_speeds(st: RiemannState) -> dict:
    """Characteristic speeds of the solution fan.

    Shocks have a single speed (``*_head == *_tail``); rarefactions report the
    head and tail speeds.
    """
    g = st.gamma
    p_star, u_star = star_state(st)
    out = {"p_star": p_star, "u_star": u_star, "contact": u_star}
    for side, sign in (("l", -1.0), ("r", 1.0)):
        rho, u, pk = getattr(st, f"rho_{side}"), getattr(st, f"u_{side}"), getattr(st, f"p_{side}")
        a = np.sqrt(g * pk / rho)
        if p_star > pk:
            sh = u + sign * a * np.sqrt((g + 1.0) / (2.0 * g) * p_star / pk + (g - 1.0) / (2.0 * g))
            rho_star = rho * (p_star / pk + (g - 1.0) / (g + 1.0)) / ((g - 1.0) / (g + 1.0) * p_star / pk + 1.0)
            out[side] = {"type": "shock", "head": sh, "tail": sh, "rho_star": rho_star}
        else:
            rho_star = rho * (p_star / pk) ** (1.0 / g)
            a_star = a * (p_star / pk) ** ((g - 1.0) / (2.0 * g))
            out[side] = {"type": "rarefaction", "head": u + sign * a, "tail": u_star + sign * a_star, "rho_star": rho_star}
    return out


def sod_exact(st: RiemannState, t: float, x, x0: float = 0.0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact ``(rho, u, p)`` at time ``t > 0`` sampled in ``eta = (x - x0) / t``."""
    if not t > 0:
        raise InvalidTime(f"time must be positive, got {t}")
    return sample_eta(st, (np.asarray(x, dtype=float) - x0) / t)


def sample_eta(st: RiemannState, eta) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Self-similar solution as a function of ``eta = x / t``."""
    eta = np.asarray(eta, dtype=float)
    g = st.gamma
    w = wave_speeds(st)
    p_star, u_star = w["p_star"], w["u_star"]
    rho = np.empty_like(eta)
    u = np.empty_like(eta)
    p = np.empty_like(eta)
    left = eta < u_star
    for side, sign, region in (("l", 1.0, left), ("r", -1.0, ~left)):
        rk, uk, pk = getattr(st, f"rho_{side}"), getattr(st, f"u_{side}"), getattr(st, f"p_{side}")
        ak = np.sqrt(g * pk / rk)
        wave = w[side]
        e = eta[region]
        # outside/inside measured towards the contact
        outer = e < wave["head"] if sign > 0 else e > wave["head"]
        inner = e >= wave["tail"] if sign > 0 else e <= wave["tail"]
        fan = ~outer & ~inner
        r_, u_, p_ = np.empty_like(e), np.empty_like(e), np.empty_like(e)
        r_[outer], u_[outer], p_[outer] = rk, uk, pk
        r_[inner], u_[inner], p_[inner] = wave["rho_star"], u_star, p_star
        if fan.any():
            ef = e[fan]
            c = 2.0 / (g + 1.0) + sign * (g - 1.0) / ((g + 1.0) * ak) * (uk - ef)
            r_[fan] = rk * c ** (2.0 / (g - 1.0))
            u_[fan] = 2.0 / (g + 1.0) * (sign * ak + 0.5 * (g - 1.0) * uk + ef)
            p_[fan] = pk * c ** (2.0 * g / (g - 1.0))
        rho[region], u[region], p[region] = r_, u_, p_
    return rho, u, p
