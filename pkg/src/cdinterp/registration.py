"""Boundary-aware registration maps on a single curved quadrilateral patch.

A Gordon-Hall map ``Psi`` carries the unit square onto the patch. Displacements
``phi`` are tensor polynomials of degree ``J`` on the unit square whose normal
component vanishes on the square's boundary, so

    N(x, a) = Psi(xi + phi(xi; a)),   xi = Psi^{-1}(x),

slides boundary points along the boundary curves. Coefficients are fitted to
marker pairs by penalised least squares with a log-barrier that keeps
``det(I + s grad phi)`` above ``delta_min``.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Legendre, Polynomial
from numpy.polynomial.legendre import leggauss
from scipy.optimize import minimize
from scipy.spatial import cKDTree

from .errors import DimensionError, FormatError, InvalidPatch, InversionFailed, OutOfPatch
from .gaussian_ot import Gaussian, wasserstein2

__all__ = [
    "Segment",
    "Arc",
    "Polyline",
    "GordonHallPatch",
    "gordon_hall",
    "rectangle_patch",
    "MapSpace",
    "RegistrationMap",
    "FitReport",
    "Markers",
    "eval_map",
    "h2_penalty",
    "default_lambda",
    "fit_registration",
    "fit_registration_multi",
    "min_jacobian_det",
    "match_mixtures",
    "ba_cdi_eval",
    "save_markers",
    "load_markers",
    "MARKER_HEADER",
]

log = logging.getLogger(__name__)

MARKER_HEADER = "# cdi-markers v1"
DELTA_MIN = 0.1
DEFAULT_DEGREE = 4
CONSTRAINT_S = (0.25, 0.5, 0.75, 1.0)
CERTIFICATE_S = np.linspace(0.0, 1.0, 21)
CONTINUATION_STEPS = 5
INSIDE_TOL = 1e-10
LAMBDA_SCALE = 1e-5


# ---------------------------------------------------------------- curves


@dataclass(frozen=True, eq=False)
class Segment:
    """Straight edge from ``p0`` (t=0) to ``p1`` (t=1)."""

    p0: np.ndarray
    p1: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p0", np.asarray(self.p0, dtype=float))
        object.__setattr__(self, "p1", np.asarray(self.p1, dtype=float))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)[..., None]
        return self.p0 + t * (self.p1 - self.p0)

    def deriv(self, t):
        t = np.asarray(t, dtype=float)
        return np.broadcast_to(self.p1 - self.p0, t.shape + (2,)).copy()


@dataclass(frozen=True, eq=False)
class Arc:
    """Circular arc ``center + radius (cos w, sin w)`` with ``w`` linear in ``t``."""

    center: np.ndarray
    radius: float
    angle0: float
    angle1: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    def __call__(self, t):
        w = self.angle0 + np.asarray(t, dtype=float) * (self.angle1 - self.angle0)
        return self.center + self.radius * np.stack([np.cos(w), np.sin(w)], axis=-1)

    def deriv(self, t):
        w = self.angle0 + np.asarray(t, dtype=float) * (self.angle1 - self.angle0)
        k = self.radius * (self.angle1 - self.angle0)
        return k * np.stack([-np.sin(w), np.cos(w)], axis=-1)


@dataclass(frozen=True, eq=False)
class Polyline:
    """Piecewise-linear curve parameterised by normalised arc length.

    Outside [0, 1] the first and last pieces are extended linearly.
    """

    points: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float)
        if p.ndim != 2 or p.shape[1] != 2 or p.shape[0] < 2:
            raise InvalidPatch("a polyline needs at least two 2D points")
        lengths = np.linalg.norm(np.diff(p, axis=0), axis=1)
        if np.any(lengths <= 0):
            raise InvalidPatch("polyline has repeated points")
        knots = np.concatenate([[0.0], np.cumsum(lengths)])
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "_knots", knots / knots[-1])

    def _piece(self, t):
        t = np.asarray(t, dtype=float)
        k = np.clip(np.searchsorted(self._knots, t, side="right") - 1, 0, self.points.shape[0] - 2)
        return t, k

    def __call__(self, t):
        t, k = self._piece(t)
        u = (t - self._knots[k]) / (self._knots[k + 1] - self._knots[k])
        return self.points[k] + u[..., None] * (self.points[k + 1] - self.points[k])

    def deriv(self, t):
        _, k = self._piece(t)
        return (self.points[k + 1] - self.points[k]) / (self._knots[k + 1] - self._knots[k])[..., None]


# ---------------------------------------------------------------- patch


@dataclass(frozen=True, eq=False)
class GordonHallPatch:
    """Transfinite map from the unit square onto a quadrilateral with curved edges.

    ``bottom`` and ``top`` are parameterised along ``xi1`` and ``left`` and
    ``right`` along ``xi2``, all in the direction of increasing coordinate.
    """

    bottom: Callable
    right: Callable
    top: Callable
    left: Callable

    def __post_init__(self):
        corners = {
            "p00": (self.bottom(0.0), self.left(0.0)),
            "p10": (self.bottom(1.0), self.right(0.0)),
            "p01": (self.top(0.0), self.left(1.0)),
            "p11": (self.top(1.0), self.right(1.0)),
        }
        pts = np.array([c for pair in corners.values() for c in pair])
        scale = max(1.0, float(np.ptp(pts, axis=0).max()))
        for name, (a, b) in corners.items():
            if np.linalg.norm(np.asarray(a) - np.asarray(b)) > 1e-10 * scale:
                raise InvalidPatch(f"edges disagree at corner {name}: {a} vs {b}")
        object.__setattr__(self, "_corners", {k: np.asarray(v[0], dtype=float) for k, v in corners.items()})
        t = np.linspace(0.0, 1.0, 41)
        xi = np.stack(np.meshgrid(t, t, indexing="ij"), axis=-1).reshape(-1, 2)
        det = np.linalg.det(self.jacobian(xi))
        if not np.all(det > 0):
            raise InvalidPatch("patch map is not orientation-preserving and injective on the sample grid")
        samples = self(xi)
        object.__setattr__(self, "_seed_xi", xi)
        object.__setattr__(self, "_tree", cKDTree(samples))
        # bounding-box diagonal of the sampled patch
        object.__setattr__(self, "diameter", float(np.linalg.norm(np.ptp(samples, axis=0))))

    def __call__(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        u, v = xi[..., 0], xi[..., 1]
        c = self._corners
        uu, vv = u[..., None], v[..., None]
        return (
            (1 - vv) * self.bottom(u)
            + vv * self.top(u)
            + (1 - uu) * self.left(v)
            + uu * self.right(v)
            - ((1 - uu) * (1 - vv) * c["p00"] + uu * (1 - vv) * c["p10"] + (1 - uu) * vv * c["p01"] + uu * vv * c["p11"])
        )

    def jacobian(self, xi) -> np.ndarray:
        """``d Psi_i / d xi_j`` with shape (..., 2, 2)."""
        xi = np.asarray(xi, dtype=float)
        u, v = xi[..., 0], xi[..., 1]
        c = self._corners
        uu, vv = u[..., None], v[..., None]
        d_u = (
            (1 - vv) * self.bottom.deriv(u)
            + vv * self.top.deriv(u)
            - self.left(v)
            + self.right(v)
            - ((1 - vv) * (c["p10"] - c["p00"]) + vv * (c["p11"] - c["p01"]))
        )
        d_v = (
            self.top(u)
            - self.bottom(u)
            + (1 - uu) * self.left.deriv(v)
            + uu * self.right.deriv(v)
            - ((1 - uu) * (c["p01"] - c["p00"]) + uu * (c["p11"] - c["p10"]))
        )
        return np.stack([d_u, d_v], axis=-1)

    def inverse(self, x, tol: float = 1e-13, max_iter: int = 50, strict: bool = True) -> np.ndarray:
        """Reference coordinates of physical points by Newton iteration.

        With ``strict=False`` points where Newton fails get NaN instead of
        raising :class:`InversionFailed`.
        """
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, 2)
        _, idx = self._tree.query(flat)
        xi = self._seed_xi[idx].copy()
        atol = tol * max(1.0, self.diameter)
        for _ in range(max_iter):
            r = self(xi) - flat
            done = np.linalg.norm(r, axis=-1) <= atol
            if np.all(done):
                break
            step = np.linalg.solve(self.jacobian(xi), r[..., None])[..., 0]
            # damp long steps that would leave the neighbourhood of the square
            n = np.linalg.norm(step, axis=-1, keepdims=True)
            step = np.where(n > 0.5, step * (0.5 / np.maximum(n, 1e-300)), step)
            xi = xi - np.where(done[:, None], 0.0, step)
        else:
            failed = ~(np.linalg.norm(self(xi) - flat, axis=-1) <= atol)
            if strict:
                raise InversionFailed(f"Newton inversion failed for {int(failed.sum())} point(s)")
            xi[failed] = np.nan
        return xi.reshape(x.shape)

    def contains(self, x, tol: float = INSIDE_TOL) -> np.ndarray:
        xi = self.inverse(x, strict=False)
        return np.all((xi >= -tol) & (xi <= 1.0 + tol), axis=-1)


def gordon_hall(bottom, right, top, left) -> GordonHallPatch:
    """Build the patch map from its four edge parameterisations."""
    return GordonHallPatch(bottom, right, top, left)


def rectangle_patch(bounds) -> GordonHallPatch:
    (a, b), (c, d) = bounds
    return GordonHallPatch(
        Segment((a, c), (b, c)), Segment((b, c), (b, d)), Segment((a, d), (b, d)), Segment((a, c), (a, d))
    )


# ---------------------------------------------------------------- map space


def _poly_family(degree: int) -> tuple[list[Polynomial], list[Polynomial]]:
    """Shifted Legendre polynomials on [0, 1]: bubble-weighted (normal) and plain (tangential)."""
    bubble = Polynomial([0.0, 1.0, -1.0])
    leg = [
        Legendre.basis(j, domain=[0.0, 1.0]).convert(kind=Polynomial, domain=[-1.0, 1.0], window=[-1.0, 1.0])
        for j in range(degree + 1)
    ]
    return [bubble * leg[i] for i in range(degree - 1)], leg


def _tables(polys: list[Polynomial], t: np.ndarray, order: int) -> list[np.ndarray]:
    out = []
    for k in range(order + 1):
        out.append(np.stack([p.deriv(k)(t) if k else p(t) for p in polys], axis=-1))
    return out


@dataclass(frozen=True, eq=False)
class MapSpace:
    """Tensor polynomials of degree ``degree`` with zero normal component on the square.

    Mode ``(c, i, j)`` has ``phi_c = B_i(xi_c) L_j(xi_other)`` with
    ``B_i = xi (1 - xi) L_i`` for ``i <= J - 2`` and ``L_j`` shifted Legendre
    for ``j <= J``; the size is ``M = 2 (J - 1) (J + 1)``.
    """

    patch: GordonHallPatch
    degree: int = DEFAULT_DEGREE

    def __post_init__(self):
        if int(self.degree) != self.degree or self.degree < 2:
            raise InvalidPatch(f"degree must be an integer >= 2, got {self.degree}")
        bub, leg = _poly_family(self.degree)
        object.__setattr__(self, "_bub", bub)
        object.__setattr__(self, "_leg", leg)
        n = self.degree + 2
        object.__setattr__(self, "quad_points", _gauss_square(n))
        object.__setattr__(self, "validation_points", _gauss_square(2 * self.degree + 4)[0])
        object.__setattr__(self, "gram_h2", self._gram())

    @property
    def size(self) -> int:
        return 2 * (self.degree - 1) * (self.degree + 1)

    @property
    def half(self) -> int:
        return (self.degree - 1) * (self.degree + 1)

    def _component_tables(self, xi, order):
        xi = np.asarray(xi, dtype=float)
        b1, b2 = _tables(self._bub, xi[..., 0], order), _tables(self._bub, xi[..., 1], order)
        l1, l2 = _tables(self._leg, xi[..., 0], order), _tables(self._leg, xi[..., 1], order)
        return b1, b2, l1, l2

    @staticmethod
    def _outer(a, b):
        return (a[..., :, None] * b[..., None, :]).reshape(a.shape[:-1] + (-1,))

    def values(self, xi) -> np.ndarray:
        """Basis values, shape (..., 2, M)."""
        b1, b2, l1, l2 = self._component_tables(xi, 0)
        h = self.half
        c0 = self._outer(b1[0], l2[0])
        c1 = self._outer(b2[0], l1[0])
        out = np.zeros(c0.shape[:-1] + (2, 2 * h))
        out[..., 0, :h] = c0
        out[..., 1, h:] = c1
        return out

    def gradients(self, xi) -> np.ndarray:
        """``d phi_c / d xi_d`` for every mode, shape (..., 2, 2, M)."""
        b1, b2, l1, l2 = self._component_tables(xi, 1)
        h = self.half
        o = self._outer
        g00, g01 = o(b1[1], l2[0]), o(b1[0], l2[1])
        g10, g11 = o(b2[0], l1[1]), o(b2[1], l1[0])
        out = np.zeros(g00.shape[:-1] + (2, 2, 2 * h))
        out[..., 0, 0, :h], out[..., 0, 1, :h] = g00, g01
        out[..., 1, 0, h:], out[..., 1, 1, h:] = g10, g11
        return out

    def hessians(self, xi) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Second derivatives ``(xx, xy, yy)`` per component, each (..., 2, M)."""
        b1, b2, l1, l2 = self._component_tables(xi, 2)
        h = self.half
        o = self._outer
        parts = (
            (o(b1[2], l2[0]), o(b2[0], l1[2])),
            (o(b1[1], l2[1]), o(b2[1], l1[1])),
            (o(b1[0], l2[2]), o(b2[2], l1[0])),
        )
        res = []
        for c0, c1 in parts:
            out = np.zeros(c0.shape[:-1] + (2, 2 * h))
            out[..., 0, :h], out[..., 1, h:] = c0, c1
            res.append(out)
        return tuple(res)

    def _gram(self) -> np.ndarray:
        pts, w = self.quad_points
        hxx, hxy, hyy = self.hessians(pts)
        g = (
            np.einsum("q,qcm,qcn->mn", w, hxx, hxx)
            + 2.0 * np.einsum("q,qcm,qcn->mn", w, hxy, hxy)
            + np.einsum("q,qcm,qcn->mn", w, hyy, hyy)
        )
        g = 0.5 * (g + g.T)
        g.flags.writeable = False
        return g

    def displacement(self, a, xi) -> np.ndarray:
        return self.values(xi) @ np.asarray(a, dtype=float)


def _gauss_square(n: int) -> tuple[np.ndarray, np.ndarray]:
    t, w = leggauss(n)
    t, w = 0.5 * (t + 1.0), 0.5 * w
    pts = np.stack(np.meshgrid(t, t, indexing="ij"), axis=-1).reshape(-1, 2)
    return pts, np.outer(w, w).reshape(-1)


def h2_quadrature(hessian: Callable[[np.ndarray], np.ndarray], n: int) -> float:
    """``int |D^2 f|^2`` over the unit square for ``hessian(xi) -> (q, ...)``."""
    pts, w = _gauss_square(n)
    h = np.asarray(hessian(pts), dtype=float)
    return float(w @ (h * h).reshape(w.size, -1).sum(axis=1))


def h2_penalty(space: MapSpace, a) -> float:
    """Squared H2 seminorm ``a^T G a`` of the reference displacement."""
    a = np.asarray(a, dtype=float)
    return float(a @ space.gram_h2 @ a)


# ---------------------------------------------------------------- maps


@dataclass(frozen=True)
class FitReport:
    pre_rms: float
    post_rms: float
    min_det: float
    feasible: bool
    converged: bool
    warning: str | None
    iterations: int
    history: tuple = ()

    def to_dict(self) -> dict:
        return {
            "pre_rms": self.pre_rms,
            "post_rms": self.post_rms,
            "min_det": self.min_det,
            "feasible": self.feasible,
            "converged": self.converged,
            "warning": self.warning,
            "iterations": self.iterations,
        }


@dataclass(frozen=True, eq=False)
class RegistrationMap:
    space: MapSpace
    coeffs: np.ndarray
    report: FitReport | None = None

    def __post_init__(self):
        a = np.array(self.coeffs, dtype=float).reshape(-1)
        if a.size != self.space.size:
            raise DimensionError(f"expected {self.space.size} coefficients, got {a.size}")
        a.flags.writeable = False
        object.__setattr__(self, "coeffs", a)

    @classmethod
    def identity(cls, space: MapSpace) -> RegistrationMap:
        return cls(space, np.zeros(space.size))

    def to_dict(self) -> dict:
        d = {"degree": self.space.degree, "coeffs": self.coeffs.tolist()}
        if self.report is not None:
            d["report"] = self.report.to_dict()
        return d


def _reference(space: MapSpace, x, tol: float = INSIDE_TOL) -> np.ndarray:
    xi = space.patch.inverse(x, strict=False)
    # NaN (failed inversion) compares False, so it counts as outside
    outside = ~np.all((xi >= -tol) & (xi <= 1.0 + tol), axis=-1)
    if np.any(outside):
        raise OutOfPatch(f"{int(outside.sum())} point(s) lie outside the patch")
    return xi


def eval_map(r: RegistrationMap, s: float, x) -> np.ndarray:
    """``N(x, s a) = Psi(xi + s phi(xi; a))`` for points (..., 2) in the patch."""
    x = np.asarray(x, dtype=float)
    xi = _reference(r.space, x)
    if s == 0.0 or not np.any(r.coeffs):
        return x.copy()
    return r.space.patch(xi + s * r.space.displacement(r.coeffs, xi))


def _jac_dets(space: MapSpace, a, points, s_values) -> np.ndarray:
    g = np.einsum("qcdm,m->qcd", space.gradients(points), a)
    s = np.asarray(s_values, dtype=float)[:, None]
    return (1 + s * g[:, 0, 0]) * (1 + s * g[:, 1, 1]) - s * s * g[:, 0, 1] * g[:, 1, 0]


def min_jacobian_det(r: RegistrationMap, s_values=CERTIFICATE_S) -> float:
    """Smallest ``det(I + s grad phi)`` on the validation grid over ``s_values``."""
    return float(_jac_dets(r.space, r.coeffs, r.space.validation_points, s_values).min())


def default_lambda(space: MapSpace, n_markers: int) -> float:
    """Penalty weight ``1e-5 * N * diam^2``.

    Coefficients are dimensionless reference displacements while the mismatch
    carries squared length, hence the ``diam^2`` factor.
    """
    return LAMBDA_SCALE * n_markers * space.patch.diameter**2


def _barrier(z: np.ndarray, z0: float) -> tuple[np.ndarray, np.ndarray]:
    """``-log z`` continued quadratically below ``z0`` so it stays finite."""
    safe = np.maximum(z, z0)
    val = np.where(z > z0, -np.log(safe), -math.log(z0) - (z - z0) / z0 + 0.5 * ((z - z0) / z0) ** 2)
    der = np.where(z > z0, -1.0 / safe, -1.0 / z0 + (z - z0) / z0**2)
    return val, der


def fit_registration(
    space: MapSpace,
    sources,
    targets,
    lam: float | None = None,
    delta_min: float = DELTA_MIN,
    gtol: float = 1e-8,
    max_iter: int = 500,
) -> RegistrationMap:
    """Fit coefficients so that ``N(sources, a)`` approximates ``targets``.

    Minimises ``sum |t_j - N(y_j, a)|^2 + lam a^T G a`` plus a log-barrier on
    ``det(I + s grad phi) - delta_min`` at Gauss points and
    ``s in {0.25, 0.5, 0.75, 1}``. The barrier weight is reduced over five
    continuation steps, each solved by BFGS from the previous solution
    (starting at ``a = 0``). If the final iterate fails the certificate the
    last feasible one is returned with a warning.
    """
    y = np.asarray(sources, dtype=float).reshape(-1, 2)
    t = np.asarray(targets, dtype=float).reshape(-1, 2)
    if y.shape != t.shape or y.shape[0] == 0:
        raise DimensionError("need matching, non-empty source and target arrays")
    if not 0.0 < delta_min < 1.0:
        raise InvalidPatch(f"delta_min must lie in (0, 1), got {delta_min}")
    n = y.shape[0]
    lam = default_lambda(space, n) if lam is None else float(lam)
    if lam < 0:
        raise InvalidPatch("penalty weight must be nonnegative")
    patch = space.patch
    xi = _reference(space, y)
    basis = space.values(xi)
    qpts, qw = space.quad_points
    qgrad = space.gradients(qpts)
    s_c = np.asarray(CONSTRAINT_S)[:, None]
    # Gauss weights make the barrier's linear term vanish at a = 0 (div phi integrates to 0)
    qw = qw / (qw.sum() * s_c.size)
    z0 = 0.01 * (1.0 - delta_min)
    b_ref = -math.log(1.0 - delta_min)
    gram = space.gram_h2
    pre_rms = float(np.sqrt(np.mean(np.sum((t - y) ** 2, axis=1))))
    mu0 = 1e-2 * n * patch.diameter**2
    # fixed quadratic wall below delta_min + margin, independent of mu
    rho = 1e2 * n * patch.diameter**2
    margin = 0.05 * (1.0 - delta_min)

    def objective(a, mu):
        zeta = xi + basis @ a
        r = t - patch(zeta)
        jac = patch.jacobian(zeta)
        f = float(np.sum(r * r)) + lam * float(a @ gram @ a)
        g = -2.0 * np.einsum("jcm,jdc,jd->m", basis, jac, r) + 2.0 * lam * (gram @ a)
        d = np.einsum("qcdm,m->qcd", qgrad, a)
        det = (1 + s_c * d[:, 0, 0]) * (1 + s_c * d[:, 1, 1]) - s_c * s_c * d[:, 0, 1] * d[:, 1, 0]
        bval, bder = _barrier(det - delta_min, z0)
        short = np.maximum(margin - (det - delta_min), 0.0)
        f += float(np.sum(qw * (mu * (bval - b_ref) + rho * short * short)))
        ddet = (
            s_c[..., None] * (1 + s_c * d[:, 1, 1])[..., None] * qgrad[:, 0, 0]
            + s_c[..., None] * (1 + s_c * d[:, 0, 0])[..., None] * qgrad[:, 1, 1]
            - (s_c * s_c)[..., None] * (d[:, 1, 0][..., None] * qgrad[:, 0, 1] + d[:, 0, 1][..., None] * qgrad[:, 1, 0])
        )
        g = g + np.einsum("sq,sqm->m", qw * (mu * bder - 2.0 * rho * short), ddet)
        return f, g

    a = np.zeros(space.size)
    best = a.copy()
    history: list[tuple[int, float]] = []
    total_iter = 0
    converged = True
    warning = None
    for k in range(CONTINUATION_STEPS):
        mu = mu0 * 10.0 ** (-k)

        def record(xk, _k=k, _mu=mu):
            history.append((_k, objective(xk, _mu)[0]))

        history.append((k, objective(a, mu)[0]))
        res = minimize(
            objective, a, args=(mu,), jac=True, method="BFGS", callback=record,
            options={"gtol": gtol, "maxiter": max_iter},
        )
        total_iter += int(res.nit)
        # status 2 is a line-search stall at machine precision, a normal end
        if res.status not in (0, 2):
            converged = False
            log.warning("registration stage %d stopped: %s", k, res.message)
        cand = np.asarray(res.x, dtype=float)
        if _jac_dets(space, cand, space.validation_points, CERTIFICATE_S).min() >= delta_min:
            best = cand
        a = cand
    if not np.array_equal(best, a):
        warning = "ReturnBestFeasible"
        log.warning("final iterate violates the Jacobian bound; returning the last feasible one")
    elif not converged:
        warning = "ReturnBestFeasible"
    r_out = patch(xi + basis @ best)
    post_rms = float(np.sqrt(np.mean(np.sum((t - r_out) ** 2, axis=1))))
    min_det = float(_jac_dets(space, best, space.validation_points, CERTIFICATE_S).min())
    report = FitReport(
        pre_rms=pre_rms,
        post_rms=post_rms,
        min_det=min_det,
        feasible=min_det >= delta_min,
        converged=converged,
        warning=warning,
        iterations=total_iter,
        history=tuple(history),
    )
    return RegistrationMap(space, best, report)


def fit_registration_multi(
    space: MapSpace, marker_sets: Sequence[tuple[np.ndarray, np.ndarray]], **kwargs
) -> RegistrationMap:
    """Fit one map to several structures; the mismatch sums over all of them."""
    if not marker_sets:
        raise DimensionError("need at least one marker set")
    src = np.concatenate([np.asarray(y, dtype=float).reshape(-1, 2) for y, _ in marker_sets])
    tgt = np.concatenate([np.asarray(t, dtype=float).reshape(-1, 2) for _, t in marker_sets])
    return fit_registration(space, src, tgt, **kwargs)


# ---------------------------------------------------------------- mixtures


MAX_MIXTURE = 8


def match_mixtures(models0: Sequence[Gaussian], models1: Sequence[Gaussian]) -> tuple[int, ...]:
    """Permutation ``I`` minimising ``sum_k W2(models0[k], models1[I[k]])``.

    Exhaustive search; among equal totals the lexicographically first
    permutation wins.
    """
    if len(models0) != len(models1):
        raise DimensionError(f"mixture sizes differ: {len(models0)} vs {len(models1)}")
    n = len(models0)
    if n == 0 or n > MAX_MIXTURE:
        raise DimensionError(f"mixture size must be between 1 and {MAX_MIXTURE}, got {n}")
    cost = np.array([[wasserstein2(g0, g1) for g1 in models1] for g0 in models0])
    best, best_cost = None, np.inf
    for perm in itertools.permutations(range(n)):
        c = float(sum(cost[k, perm[k]] for k in range(n)))
        if c < best_cost:
            best, best_cost = perm, c
    return tuple(best)


# ---------------------------------------------------------------- interpolation


def ba_cdi_eval(u0, u1, r01: RegistrationMap, r10: RegistrationMap, s: float, x, fallback=None) -> np.ndarray:
    """Boundary-aware convex displacement interpolant.

    ``(1 - s) U0(N(x, s a10)) + s U1(N(x, (1 - s) a01))`` inside the patch.
    Points outside use ``fallback`` (a ``CdiOperator``) when given.
    """
    from .interpolation import cdi_eval

    s = float(s)
    if not 0.0 <= s <= 1.0:
        raise OutOfPatch(f"s must lie in [0, 1], got {s}")
    x = np.asarray(x, dtype=float)
    flat = x.reshape(-1, 2)
    inside = r01.space.patch.contains(flat)
    if not np.all(inside) and fallback is None:
        raise OutOfPatch(f"{int((~inside).sum())} point(s) lie outside the patch")
    out = None
    if np.any(inside):
        xin = flat[inside]
        w = eval_map(r10, s, xin)
        tt = eval_map(r01, 1.0 - s, xin)
        vin = (1.0 - s) * np.asarray(u0(w)) + s * np.asarray(u1(tt))
        out = np.empty((flat.shape[0],) + vin.shape[1:])
        out[inside] = vin
    if not np.all(inside):
        vout = cdi_eval(fallback, s, flat[~inside])
        if out is None:
            out = np.empty((flat.shape[0],) + vout.shape[1:])
        out[~inside] = vout
    return out.reshape(x.shape[:-1] + out.shape[1:])


# ---------------------------------------------------------------- marker files


@dataclass(frozen=True, eq=False)
class Markers:
    """Marker pairs ``sources[j] -> targets[j]`` with optional cluster labels."""

    sources: np.ndarray
    targets: np.ndarray
    clusters: np.ndarray | None = field(default=None)

    def __post_init__(self):
        y = np.asarray(self.sources, dtype=float).reshape(-1, 2)
        t = np.asarray(self.targets, dtype=float).reshape(-1, 2)
        if y.shape != t.shape:
            raise DimensionError("sources and targets must have the same shape")
        object.__setattr__(self, "sources", y)
        object.__setattr__(self, "targets", t)
        if self.clusters is not None:
            c = np.asarray(self.clusters, dtype=int).reshape(-1)
            if c.size != y.shape[0]:
                raise DimensionError("one cluster label per marker is required")
            object.__setattr__(self, "clusters", c)

    def __len__(self) -> int:
        return self.sources.shape[0]


def save_markers(markers: Markers, path) -> None:
    lines = [MARKER_HEADER]
    for j in range(len(markers)):
        row = [f"{v:.17g}" for v in (*markers.sources[j], *markers.targets[j])]
        if markers.clusters is not None:
            row.append(str(int(markers.clusters[j])))
        lines.append(" ".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_markers(path) -> Markers:
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != MARKER_HEADER:
        raise FormatError(f"expected header {MARKER_HEADER!r}", line=1)
    rows, labels = [], []
    ncols = None
    for i, line in enumerate(text[1:], start=2):
        parts = line.split()
        if not parts:
            continue
        if len(parts) not in (4, 5):
            raise FormatError(f"expected 4 or 5 columns, got {len(parts)}", line=i)
        if ncols is None:
            ncols = len(parts)
        elif len(parts) != ncols:
            raise FormatError("cluster column must be present on all rows or none", line=i)
        try:
            rows.append([float(v) for v in parts[:4]])
            if ncols == 5:
                labels.append(int(parts[4]))
        except ValueError as exc:
            raise FormatError(str(exc), line=i) from None
        if not np.all(np.isfinite(rows[-1])):
            raise FormatError("non-finite coordinate", line=i)
    if not rows:
        raise FormatError("no marker rows", line=len(text))
    arr = np.array(rows)
    return Markers(arr[:, :2], arr[:, 2:], np.array(labels) if ncols == 5 else None)
