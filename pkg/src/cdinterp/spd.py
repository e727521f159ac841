"""Closed-form linear algebra for small symmetric positive-definite matrices.

Covariances in this package live in physical space, so they are at most
3x3. Eigen-decompositions are evaluated in closed form: directly for n=1, by
a Jacobi rotation angle for n=2, and by the trigonometric formula for n=3
(eigenvectors are recovered with cross products and a 2x2 deflation, which
stays accurate for clustered eigenvalues).
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InvalidMatrix, NotPositiveDefinite

__all__ = [
    "as_symmetric",
    "spd_floor",
    "sym_eig",
    "spd_sqrt",
    "spd_inv_sqrt",
    "spd_det",
    "spd_inv",
    "is_spd",
]

_SYM_RTOL = 1e-10


def as_symmetric(a) -> np.ndarray:
    """Validate ``a`` as a finite symmetric n x n matrix (n <= 3).

    The returned array is an exactly symmetric float copy.
    """
    m = np.array(a, dtype=float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or not 1 <= m.shape[0] <= 3:
        raise InvalidMatrix(f"expected a square matrix of size 1..3, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidMatrix("matrix has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(m))))
    if np.max(np.abs(m - m.T)) > _SYM_RTOL * scale:
        raise InvalidMatrix("matrix is not symmetric")
    return 0.5 * (m + m.T)


def spd_floor(a: np.ndarray) -> float:
    """Positive-definiteness floor: eigenvalues must exceed this value."""
    n = a.shape[0]
    return 1e-12 * max(1.0, float(np.trace(a)) / n)


def _eig2(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if a[0, 1] == 0.0:
        d = np.diag(a).copy()
        order = np.argsort(d, kind="stable")
        return d[order], np.eye(2)[:, order]
    theta = 0.5 * math.atan2(2.0 * a[0, 1], a[0, 0] - a[1, 1])
    c, s = math.cos(theta), math.sin(theta)
    # columns: (small, large)
    v = np.array([[-s, c], [c, s]])
    w = np.einsum("ij,ik,kj->j", v, a, v)
    if w[0] > w[1]:
        w, v = w[::-1], v[:, ::-1]
    return w, v


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _null_vector(b: np.ndarray) -> np.ndarray:
    """Unit vector spanning the (approximate) null space of a rank-2 3x3 matrix."""
    crosses = [np.cross(b[0], b[1]), np.cross(b[0], b[2]), np.cross(b[1], b[2])]
    norms = [float(np.dot(c, c)) for c in crosses]
    k = int(np.argmax(norms))
    if norms[k] == 0.0:
        # b is (numerically) rank <= 1: any vector orthogonal to its largest row
        rows = [float(np.dot(r, r)) for r in b]
        r = b[int(np.argmax(rows))]
        if not np.any(r):
            return np.array([1.0, 0.0, 0.0])
        return _orthonormal_complement(_unit(r))[0]
    return crosses[k] / math.sqrt(norms[k])


def _orthonormal_complement(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if abs(v[0]) > abs(v[1]):
        u = np.array([-v[2], 0.0, v[0]]) / math.hypot(v[0], v[2])
    else:
        u = np.array([0.0, v[2], -v[1]]) / math.hypot(v[1], v[2])
    return u, np.cross(v, u)


def _eig3(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    scale = float(np.max(np.abs(a)))
    if scale == 0.0:
        return np.zeros(3), np.eye(3)
    b = a / scale
    off = b[0, 1] ** 2 + b[0, 2] ** 2 + b[1, 2] ** 2
    if off == 0.0:
        d = np.diag(b)
        order = np.argsort(d, kind="stable")
        return d[order] * scale, np.eye(3)[:, order]

    q = np.trace(b) / 3.0
    c = b - q * np.eye(3)
    p = math.sqrt((c[0, 0] ** 2 + c[1, 1] ** 2 + c[2, 2] ** 2 + 2.0 * off) / 6.0)
    r = np.linalg.det(c / p) / 2.0
    phi = math.acos(min(1.0, max(-1.0, r))) / 3.0
    lam_max = q + 2.0 * p * math.cos(phi)
    lam_min = q + 2.0 * p * math.cos(phi + 2.0 * math.pi / 3.0)
    lam_mid = 3.0 * q - lam_max - lam_min

    # Start from the best separated eigenvalue, then deflate to 2x2.
    if lam_max - lam_mid >= lam_mid - lam_min:
        v0 = _null_vector(b - lam_max * np.eye(3))
    else:
        v0 = _null_vector(b - lam_min * np.eye(3))
    u, w = _orthonormal_complement(v0)
    basis = np.column_stack([u, w])
    sub = basis.T @ b @ basis
    _, sub_vecs = _eig2(0.5 * (sub + sub.T))
    v = np.column_stack([v0, basis @ sub_vecs[:, 0], basis @ sub_vecs[:, 1]])
    lam = np.einsum("ij,ik,kj->j", v, a, v)
    order = np.argsort(lam, kind="stable")
    return lam[order], v[:, order]


def sym_eig(a) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric matrix of size 1, 2 or 3.

    Returns
    -------
    w : (n,) ndarray
        Eigenvalues in ascending order.
    v : (n, n) ndarray
        Orthonormal eigenvectors stored as columns, ``a @ v[:, i] = w[i] * v[:, i]``.
    """
    m = as_symmetric(a)
    n = m.shape[0]
    if n == 1:
        return m[0].copy(), np.ones((1, 1))
    if n == 2:
        return _eig2(m)
    return _eig3(m)


def _checked_eig(a) -> tuple[np.ndarray, np.ndarray]:
    m = as_symmetric(a)
    w, v = sym_eig(m)
    floor = spd_floor(m)
    if w[0] <= floor:
        raise NotPositiveDefinite(f"smallest eigenvalue {w[0]:.3e} <= {floor:.3e}")
    return w, v


def is_spd(a) -> bool:
    try:
        _checked_eig(a)
    except (NotPositiveDefinite, InvalidMatrix):
        return False
    return True


def _from_eig(w: np.ndarray, v: np.ndarray) -> np.ndarray:
    out = (v * w) @ v.T
    return 0.5 * (out + out.T)


def spd_sqrt(a) -> np.ndarray:
    """Principal square root of an SPD matrix."""
    w, v = _checked_eig(a)
    return _from_eig(np.sqrt(w), v)


def spd_inv_sqrt(a) -> np.ndarray:
    """Inverse of the principal square root of an SPD matrix."""
    w, v = _checked_eig(a)
    return _from_eig(1.0 / np.sqrt(w), v)


def spd_inv(a) -> np.ndarray:
    w, v = _checked_eig(a)
    return _from_eig(1.0 / w, v)


def spd_det(a) -> float:
    w, _ = _checked_eig(a)
    return float(np.prod(w))
