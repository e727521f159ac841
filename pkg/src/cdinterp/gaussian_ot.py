"""Closed-form optimal transport between multivariate Gaussians.

For ``g0 = N(m0, S0)`` and ``g1 = N(m1, S1)`` the optimal map is affine,

    T(x) = m1 + A (x - m0),   A = S0^{-1/2} (S0^{1/2} S1 S0^{1/2})^{1/2} S0^{-1/2},

and ``A`` is SPD (the map is the gradient of a convex quadratic). The
displacement path ``T(s, x) = (1 - s) x + s T(x)`` pushes ``g0`` onto the
Gaussian ``N(m_s, S_s)`` returned by :func:`displacement_gaussian`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import spd
from .errors import DimensionError, InvalidMatrix, SingularMap

__all__ = [
    "Gaussian",
    "AffineTransportMap",
    "ot_map",
    "eval_forward",
    "eval_inverse",
    "displacement_gaussian",
    "wasserstein2",
    "gaussians_equal",
]

EQUAL_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class Gaussian:
    """Normal model with mean ``mean`` (n,) and SPD covariance ``cov`` (n, n)."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float)).copy()
        if mean.ndim != 1 or not np.all(np.isfinite(mean)):
            raise InvalidMatrix("mean must be a finite vector")
        cov = spd.as_symmetric(self.cov)
        if cov.shape[0] != mean.size:
            raise DimensionError(f"mean has length {mean.size} but cov is {cov.shape}")
        # raises NotPositiveDefinite
        spd.spd_det(cov)
        mean.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    def pdf(self, x) -> np.ndarray:
        """Density evaluated at points ``x`` of shape (..., n)."""
        x = np.asarray(x, dtype=float)
        d = x - self.mean
        prec = spd.spd_inv(self.cov)
        q = np.einsum("...i,ij,...j->...", d, prec, d)
        norm = (2.0 * np.pi) ** (-0.5 * self.dim) / np.sqrt(spd.spd_det(self.cov))
        return norm * np.exp(-0.5 * q)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "cov": self.cov.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> Gaussian:
        return cls(np.asarray(d["mean"]), np.asarray(d["cov"]))


def gaussians_equal(g0: Gaussian, g1: Gaussian, rtol: float = EQUAL_RTOL) -> bool:
    """Componentwise relative equality of means and covariances."""
    if g0.dim != g1.dim:
        return False

    def close(a, b):
        return np.all(np.abs(a - b) <= rtol * np.maximum(np.abs(a), np.abs(b)))

    return bool(close(g0.mean, g1.mean) and close(g0.cov, g1.cov))


@dataclass(frozen=True, eq=False)
class AffineTransportMap:
    """The map ``x -> target_mean + matrix @ (x - source_mean)`` with SPD ``matrix``."""

    matrix: np.ndarray
    source_mean: np.ndarray
    target_mean: np.ndarray

    @property
    def dim(self) -> int:
        return self.source_mean.size

    def __call__(self, x) -> np.ndarray:
        return eval_forward(self, 1.0, x)

    def to_dict(self) -> dict:
        return {
            "matrix": self.matrix.tolist(),
            "source_mean": self.source_mean.tolist(),
            "target_mean": self.target_mean.tolist(),
        }


def _check_pair(g0: Gaussian, g1: Gaussian) -> None:
    if g0.dim != g1.dim:
        raise DimensionError(f"dimension mismatch: {g0.dim} vs {g1.dim}")


def _bures_root(g0: Gaussian, g1: Gaussian) -> tuple[np.ndarray, np.ndarray]:
    """Return (S0^{1/2}, (S0^{1/2} S1 S0^{1/2})^{1/2})."""
    r0 = spd.spd_sqrt(g0.cov)
    mid = r0 @ g1.cov @ r0
    return r0, spd.spd_sqrt(0.5 * (mid + mid.T))


def ot_map(g0: Gaussian, g1: Gaussian) -> AffineTransportMap:
    """Optimal transport map pushing ``g0`` forward onto ``g1``."""
    _check_pair(g0, g1)
    if gaussians_equal(g0, g1):
        a = np.eye(g0.dim)
    else:
        _, root = _bures_root(g0, g1)
        r0_inv = spd.spd_inv_sqrt(g0.cov)
        a = r0_inv @ root @ r0_inv
        a = 0.5 * (a + a.T)
    a.flags.writeable = False
    return AffineTransportMap(a, g0.mean, g1.mean)


def _as_points(tmap: AffineTransportMap, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.shape[-1] != tmap.dim:
        raise DimensionError(f"points have trailing size {x.shape[-1]}, map dimension is {tmap.dim}")
    return x


def eval_forward(tmap: AffineTransportMap, s: float, x) -> np.ndarray:
    """Evaluate ``T(s, x) = (1 - s) x + s (m1 + A (x - m0))`` at points (..., n)."""
    x = _as_points(tmap, x)
    full = tmap.target_mean + (x - tmap.source_mean) @ tmap.matrix.T
    return (1.0 - s) * x + s * full


def eval_inverse(tmap: AffineTransportMap, s: float, y) -> np.ndarray:
    """Invert ``x -> T(s, x)``.

    ``T(s, x) = B_s x + s (m1 - A m0)`` with ``B_s = (1 - s) I + s A``, which is
    SPD for ``s`` in [0, 1] because ``A`` is.
    """
    y = _as_points(tmap, y)
    n = tmap.dim
    b = (1.0 - s) * np.eye(n) + s * tmap.matrix
    shift = s * (tmap.target_mean - tmap.matrix @ tmap.source_mean)
    w, v = spd.sym_eig(b)
    if w[0] <= 0.0:
        raise SingularMap(f"(1-s)I + sA is singular at s={s}")
    b_inv = (v / w) @ v.T
    return (y - shift) @ b_inv.T


def jacobian_det(tmap: AffineTransportMap, s: float) -> float:
    """Determinant of the gradient of ``T(s, .)``."""
    b = (1.0 - s) * np.eye(tmap.dim) + s * tmap.matrix
    return float(np.prod(spd.sym_eig(b)[0]))


def displacement_gaussian(g0: Gaussian, g1: Gaussian, s: float) -> Gaussian:
    """Gaussian on the Wasserstein geodesic from ``g0`` (s=0) to ``g1`` (s=1)."""
    _check_pair(g0, g1)
    if s == 0.0:
        return g0
    if s == 1.0:
        return g1
    mean = (1.0 - s) * g0.mean + s * g1.mean
    if gaussians_equal(g0, g1):
        return Gaussian(mean, g0.cov)
    _, root = _bures_root(g0, g1)
    r0_inv = spd.spd_inv_sqrt(g0.cov)
    inner = (1.0 - s) * g0.cov + s * root
    cov = r0_inv @ inner @ inner @ r0_inv
    return Gaussian(mean, 0.5 * (cov + cov.T))


def wasserstein2(g0: Gaussian, g1: Gaussian) -> float:
    """Wasserstein-2 distance between two Gaussians."""
    _check_pair(g0, g1)
    if gaussians_equal(g0, g1):
        return 0.0
    # averaging both orderings makes the result exactly symmetric
    _, root = _bures_root(g0, g1)
    _, root_rev = _bures_root(g1, g0)
    bures_trace = 0.5 * (np.trace(root) + np.trace(root_rev))
    d2 = float(np.sum((g1.mean - g0.mean) ** 2))
    d2 += float(np.trace(g0.cov) + np.trace(g1.cov) - 2.0 * bures_trace)
    return float(np.sqrt(max(d2, 0.0)))
