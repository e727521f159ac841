"""Coherent-structure detection and Gaussian model fitting.

A testing function marks grid points; the marked points are treated as iid
draws of a Gaussian whose mean and covariance are their maximum-likelihood
estimates (1/N normalisation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import EmptySelection, InvalidField, InvalidFraction, NotPositiveDefinite
from .fields import StructuredField, forward_difference, gradient_fd
from .gaussian_ot import Gaussian

__all__ = [
    "PointCloud",
    "select_points",
    "select_top_fraction",
    "mle_fit",
    "density_fit",
    "ducros_indicator",
    "ducros_field",
    "element_max",
    "split_clusters",
    "sign_rule",
    "gradient_threshold",
    "jump_threshold",
]


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Marked points, shape (N, n), with optional integer cluster labels."""

    points: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        object.__setattr__(self, "points", p)
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=int)
            if lab.shape != (p.shape[0],):
                raise InvalidField("one label per point is required")
            object.__setattr__(self, "labels", lab)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def _flat_points(grid_points) -> np.ndarray:
    p = np.asarray(grid_points, dtype=float)
    if p.ndim == 1:
        return p[:, None]
    return p.reshape(-1, p.shape[-1])


def select_points(grid_points, testing) -> PointCloud:
    """Keep the points where the testing function is strictly positive.

    ``testing`` is either a vectorised callable on points (N, n) or an array of
    precomputed testing values aligned with ``grid_points``.
    """
    p = _flat_points(grid_points)
    if p.shape[0] == 0:
        raise InvalidField("no candidate points")
    t = testing(p) if callable(testing) else testing
    t = np.asarray(t, dtype=float).reshape(-1)
    if t.size != p.shape[0]:
        raise InvalidField(f"{t.size} testing values for {p.shape[0]} points")
    keep = t > 0
    if not np.any(keep):
        raise EmptySelection(
            f"testing function is non-positive at all {p.shape[0]} points (max value {t.max():.3e})"
        )
    return PointCloud(p[keep])


def select_top_fraction(grid_points, values, fraction: float) -> PointCloud:
    """Keep the ``ceil(fraction * N)`` points with the largest values.

    Ties are resolved in favour of the earlier point; the selection is returned
    in input order.
    """
    if not (0.0 < fraction <= 1.0):
        raise InvalidFraction(f"fraction must lie in (0, 1], got {fraction}")
    p = _flat_points(grid_points)
    v = np.asarray(values, dtype=float).reshape(-1)
    if v.size == 0 or v.size != p.shape[0]:
        raise InvalidField(f"{v.size} values for {p.shape[0]} points")
    # round first so that e.g. 0.005 * 200 counts as exactly 1
    k = math.ceil(round(fraction * v.size, 9))
    order = np.argsort(-v, kind="stable")[:k]
    return PointCloud(p[np.sort(order)])


def mle_fit(cloud: PointCloud) -> Gaussian:
    """Maximum-likelihood Gaussian of a point cloud (covariance normalised by N)."""
    y = cloud.points
    n_pts, n = y.shape
    if n_pts < n + 1:
        raise NotPositiveDefinite(f"{n_pts} points cannot span {n} dimensions")
    mean = y.mean(axis=0)
    d = y - mean
    cov = d.T @ d / n_pts
    return Gaussian(mean, 0.5 * (cov + cov.T))


def density_fit(points, weights) -> Gaussian:
    """Gaussian with the first two moments of a nonnegative weighted point set.

    Used to build "exact-moment" models of density-like fields from quadrature
    nodes and weights.
    """
    p = _flat_points(points)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if np.any(w < 0) or w.sum() <= 0:
        raise InvalidField("weights must be nonnegative with positive sum")
    w = w / w.sum()
    mean = w @ p
    d = p - mean
    cov = (d * w[:, None]).T @ d
    return Gaussian(mean, 0.5 * (cov + cov.T))


def ducros_indicator(u, div_u, curl_u, a, p, grad_p, eps: float = 1e-4) -> np.ndarray:
    """Compression/pressure-jump/velocity sensor.

    ``phi = (-div u)^+ / sqrt(div^2 + |curl|^2 + a^2) * |grad p| / (p + eps) * |u|``

    Inputs broadcast over leading axes: ``u`` and ``grad_p`` are (..., n),
    ``curl_u`` is (...) in 2D or (..., 3) in 3D, the rest are (...).
    """
    u = np.asarray(u, dtype=float)
    grad_p = np.asarray(grad_p, dtype=float)
    div_u = np.asarray(div_u, dtype=float)
    curl_u = np.asarray(curl_u, dtype=float)
    a = np.asarray(a, dtype=float)
    p = np.asarray(p, dtype=float)
    for name, arr in (("u", u), ("div_u", div_u), ("curl_u", curl_u), ("a", a), ("p", p), ("grad_p", grad_p)):
        if not np.all(np.isfinite(arr)):
            raise InvalidField(f"{name} has non-finite entries")
    if np.any(a <= 0):
        raise InvalidField("sound speed must be positive")
    if np.any(p + eps <= 0):
        raise InvalidField("p + eps must be positive")
    curl2 = curl_u * curl_u if curl_u.ndim == div_u.ndim else np.sum(curl_u * curl_u, axis=-1)
    sensor = np.maximum(-div_u, 0.0) / np.sqrt(div_u * div_u + curl2 + a * a)
    return sensor * np.linalg.norm(grad_p, axis=-1) / (p + eps) * np.linalg.norm(u, axis=-1)


def ducros_field(f: StructuredField, gamma: float = 1.4, eps: float = 1e-4) -> np.ndarray:
    """Nodal indicator for a 2D snapshot with components (rho, u1, u2, p).

    On structured data each node is its own sample set, so the per-cell
    maximum reduces to the nodal value.
    """
    if f.dim != 2 or f.components != 4:
        raise InvalidField("expected a 2D field with components (rho, u1, u2, p)")
    rho, u1, u2, p = (f.values[..., i] for i in range(4))
    if np.any(rho <= 0):
        raise InvalidField("density must be positive")
    g1 = gradient_fd(f, 1).values
    g2 = gradient_fd(f, 2).values
    gp = gradient_fd(f, 3).values
    div = g1[..., 0] + g2[..., 1]
    curl = g2[..., 0] - g1[..., 1]
    a = np.sqrt(gamma * np.maximum(p, 0.0) / rho)
    if np.any(a <= 0):
        raise InvalidField("pressure must be positive")
    return ducros_indicator(np.stack([u1, u2], -1), div, curl, a, p, gp, eps)


def element_max(values, element_ids) -> np.ndarray:
    """Per-element maximum of |values| over sample points tagged by element id."""
    v = np.abs(np.asarray(values, dtype=float).reshape(-1))
    ids = np.asarray(element_ids, dtype=int).reshape(-1)
    out = np.full(ids.max() + 1, -np.inf)
    np.maximum.at(out, ids, v)
    return out


def split_clusters(cloud: PointCloud, rule: Callable[[np.ndarray], np.ndarray]) -> list[PointCloud]:
    """Partition a cloud by integer labels ``rule(points)``.

    Clusters are returned in ascending label order and keep the input order
    within each cluster.
    """
    labels = np.asarray(rule(cloud.points), dtype=int).reshape(-1)
    if labels.size != len(cloud):
        raise InvalidField("rule must return one label per point")
    return [
        PointCloud(cloud.points[labels == lab], labels[labels == lab])
        for lab in np.unique(labels)
    ]


def sign_rule(axis: int = 1) -> Callable[[np.ndarray], np.ndarray]:
    """Label 1 for points with positive coordinate ``axis``, 0 otherwise."""

    def rule(points: np.ndarray) -> np.ndarray:
        return (np.asarray(points)[:, axis] > 0).astype(int)

    return rule


def gradient_threshold(f: StructuredField, threshold: float, component: int = 0) -> np.ndarray:
    """Nodal testing values ``|dU/dx| - threshold`` (1D) or ``|grad U| - threshold``."""
    g = gradient_fd(f, component).values
    return np.linalg.norm(g, axis=-1) - threshold


def jump_threshold(f: StructuredField, threshold: float = 1.0, component: int = 0, axis: int = 0) -> np.ndarray:
    """Nodal testing values ``|U(x + h e_axis) - U(x)| / h - threshold``."""
    return np.abs(forward_difference(f, component, axis)) - threshold
