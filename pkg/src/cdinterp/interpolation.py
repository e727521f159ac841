"""Nonlinear interpolation of two snapshots through Gaussian transport maps.

With ``T`` the optimal map from the model of ``U0`` to the model of ``U1``
and ``R`` the optimal map in the opposite direction, the convex displacement
interpolant is

    U(s, x) = (1 - s) U0(W(s, x)) + s U1(T(1 - s, x)),
    W(s, x) = (1 - s) x + s R(x),    T(s, x) = (1 - s) x + s T(x).

Also provided: the plain convex blend, the Lagrangian variant (blend of the
mapped fields pulled back through the inverse displacement map) and the
density displacement interpolant (pull-back of ``U0`` with the Jacobian
factor, i.e. the McCann interpolant of a density field).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import InvalidField, NonMonotoneRescaling
from .fields import Grid, nodal_values
from .gaussian_ot import AffineTransportMap, Gaussian, eval_forward, eval_inverse, jacobian_det, ot_map

__all__ = [
    "CdiOperator",
    "cdi_eval",
    "convex_eval",
    "lagrangian_eval",
    "displacement_eval",
    "project_s",
    "project_s_convex",
    "Rescaling",
    "learn_rescaling",
    "SCAN_POINTS",
]

SCAN_POINTS = 101
S_TOL = 1e-4

Field = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class CdiOperator:
    """Two snapshots together with the Gaussian maps between their models."""

    u0: Field
    u1: Field
    map01: AffineTransportMap
    map10: AffineTransportMap
    g0: Gaussian | None = None
    g1: Gaussian | None = None

    @classmethod
    def from_models(cls, u0: Field, u1: Field, g0: Gaussian, g1: Gaussian) -> CdiOperator:
        # both directions are solved in closed form rather than inverted
        return cls(u0, u1, ot_map(g0, g1), ot_map(g1, g0), g0, g1)

    def swapped(self) -> CdiOperator:
        return CdiOperator(self.u1, self.u0, self.map10, self.map01, self.g1, self.g0)

    @property
    def dim(self) -> int:
        return self.map01.dim


def _points(op_dim: int, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if op_dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    return x


def _check_s(s: float) -> float:
    s = float(s)
    if not 0.0 <= s <= 1.0:
        raise InvalidField(f"s must lie in [0, 1], got {s}")
    return s


def cdi_eval(op: CdiOperator, s: float, x) -> np.ndarray:
    """Convex displacement interpolant at points ``x`` (..., n)."""
    s = _check_s(s)
    x = _points(op.dim, x)
    w = (1.0 - s) * x + s * eval_forward(op.map10, 1.0, x)
    t = eval_forward(op.map01, 1.0 - s, x)
    return (1.0 - s) * op.u0(w) + s * op.u1(t)


def convex_eval(u0: Field, u1: Field, s: float, x) -> np.ndarray:
    """Pointwise convex blend ``(1 - s) U0(x) + s U1(x)``."""
    s = _check_s(s)
    return (1.0 - s) * u0(x) + s * u1(x)


def lagrangian_eval(op: CdiOperator, s: float, x) -> np.ndarray:
    """Blend of ``U0`` and ``U1 o T(1, .)`` pulled back through ``T(s, .)^-1``."""
    s = _check_s(s)
    x = _points(op.dim, x)
    xi = eval_inverse(op.map01, s, x)
    return (1.0 - s) * op.u0(xi) + s * op.u1(eval_forward(op.map01, 1.0, xi))


def displacement_eval(op: CdiOperator, s: float, x) -> np.ndarray:
    """Density displacement interpolant ``U0(R(s, x)) det grad R(s, x)``.

    ``R(s, .)`` inverts the affine path ``T(s, .)`` of ``map01``. For density
    fields whose self-similar evolution is exactly a dilation this reproduces
    the intermediate density; it is only meaningful for nonnegative,
    mass-carrying fields.
    """
    s = _check_s(s)
    x = _points(op.dim, x)
    return op.u0(eval_inverse(op.map01, s, x)) / jacobian_det(op.map01, s)


_INTERPOLANTS = {
    "cdi": cdi_eval,
    "lagrangian": lagrangian_eval,
    "displacement": displacement_eval,
}


def _objective(op: CdiOperator, target, grid: Grid, mask, kind: str):
    try:
        evaluate = _INTERPOLANTS[kind]
    except KeyError:
        raise InvalidField(f"unknown interpolant {kind!r}; choose from {sorted(_INTERPOLANTS)}") from None
    nodes = grid.nodes()
    ref = nodal_values(target, grid)
    w = grid.trapezoid_weights(mask)[..., None]
    ref_norm = float(np.sqrt(np.sum(w * ref * ref)))
    if ref_norm == 0.0:
        ref_norm = 1.0

    def rel_err(s: float) -> float:
        d = evaluate(op, s, nodes) - ref
        return float(np.sqrt(np.sum(w * d * d))) / ref_norm

    return rel_err


def project_s(op: CdiOperator, target, grid: Grid, mask=None, kind: str = "cdi") -> tuple[float, float]:
    """L2 projection of ``target`` onto the interpolant path ``s -> U(s, .)``.

    The relative error is scanned on 101 equispaced values of ``s`` and the
    best bracket is refined with a bounded Brent search to ``|ds| <= 1e-4``.
    Returns ``(s_star, relative_error)``.
    """
    rel_err = _objective(op, target, grid, mask, kind)
    scan = np.linspace(0.0, 1.0, SCAN_POINTS)
    errs = np.array([rel_err(s) for s in scan])
    i = int(np.argmin(errs))
    best_s, best_e = float(scan[i]), float(errs[i])
    lo, hi = scan[max(i - 1, 0)], scan[min(i + 1, SCAN_POINTS - 1)]
    res = minimize_scalar(rel_err, bounds=(lo, hi), method="bounded", options={"xatol": S_TOL * 0.5})
    if res.fun < best_e:
        best_s, best_e = float(res.x), float(res.fun)
    return best_s, best_e


def project_s_convex(u0: Field, u1: Field, target, grid: Grid, mask=None) -> tuple[float, float]:
    """L2 projection of ``target`` onto the segment between ``U0`` and ``U1``.

    The objective is quadratic in ``s``, so the minimiser is computed in closed
    form and clipped to [0, 1].
    """
    v0, v1, ref = nodal_values(u0, grid), nodal_values(u1, grid), nodal_values(target, grid)
    w = grid.trapezoid_weights(mask)[..., None]
    d = v1 - v0
    dd = float(np.sum(w * d * d))
    s = 0.0 if dd == 0.0 else float(np.clip(np.sum(w * (ref - v0) * d) / dd, 0.0, 1.0))
    r = v0 + s * d - ref
    ref_norm = float(np.sqrt(np.sum(w * ref * ref))) or 1.0
    return s, float(np.sqrt(np.sum(w * r * r))) / ref_norm


@dataclass(frozen=True)
class Rescaling:
    """Monotone piecewise-linear map ``t -> s`` on [0, 1]."""

    t_nodes: np.ndarray
    s_nodes: np.ndarray

    def __call__(self, t):
        return np.interp(t, self.t_nodes, self.s_nodes)


def learn_rescaling(
    op: CdiOperator,
    snapshots: Sequence[tuple[float, object]],
    grid: Grid,
    mask=None,
    kind: str = "cdi",
) -> Rescaling:
    """Fit the rescaling ``t -> s`` from intermediate snapshots.

    ``snapshots`` lists ``(t_k, field_k)`` with ``t`` normalised to [0, 1] and
    sorted. Endpoints are pinned to ``s(0) = 0`` and ``s(1) = 1``; interior
    values come from :func:`project_s`. A non-increasing sequence raises
    :class:`NonMonotoneRescaling` instead of being reordered.
    """
    ts = [float(t) for t, _ in snapshots]
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise InvalidField("snapshot parameters must be strictly increasing")
    if ts and (ts[0] < 0.0 or ts[-1] > 1.0):
        raise InvalidField("snapshot parameters must lie in [0, 1]")
    t_nodes, s_nodes = [0.0], [0.0]
    for t, f in snapshots:
        if t in (0.0, 1.0):
            continue
        s, _ = project_s(op, f, grid, mask, kind)
        t_nodes.append(t)
        s_nodes.append(s)
    t_nodes.append(1.0)
    s_nodes.append(1.0)
    bad = [k for k in range(1, len(s_nodes)) if s_nodes[k] <= s_nodes[k - 1]]
    if bad:
        raise NonMonotoneRescaling("projected s values are not strictly increasing", bad)
    return Rescaling(np.array(t_nodes), np.array(s_nodes))
