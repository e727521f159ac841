"""Fields on rectilinear grids and analytic fields.

Points are always arrays of shape ``(..., n)`` with ``n`` the spatial
dimension (1 or 2) and field values are arrays of shape ``(..., d)``. Both
:class:`StructuredField` and :class:`FieldFunction` are callables with this
signature, so the interpolation code never needs to know which one it holds.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import FormatError, GridTooCoarse, InvalidField, OutOfDomain, ZeroReference

__all__ = [
    "Grid",
    "Extension",
    "StructuredField",
    "FieldFunction",
    "sample",
    "gradient_fd",
    "forward_difference",
    "nodal_values",
    "l2_norm",
    "l2_error",
    "load_snapshot",
    "save_snapshot",
    "SNAPSHOT_HEADER",
]

SNAPSHOT_HEADER = "# cdi-snapshot v1"


@dataclass(frozen=True)
class Grid:
    """Tensor grid with ``shape[i]`` equispaced nodes on ``bounds[i]``."""

    bounds: tuple[tuple[float, float], ...]
    shape: tuple[int, ...]

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        shape = tuple(int(n) for n in self.shape)
        if len(bounds) != len(shape) or len(shape) not in (1, 2):
            raise InvalidField("grid must be 1D or 2D with one (lo, hi) pair per axis")
        for (lo, hi), n in zip(bounds, shape):
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise InvalidField(f"bounds must be finite and increasing, got ({lo}, {hi})")
            if n < 2:
                raise InvalidField("each active axis needs at least 2 nodes")
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "shape", shape)

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(np.linspace(lo, hi, n) for (lo, hi), n in zip(self.bounds, self.shape))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple((hi - lo) / (n - 1) for (lo, hi), n in zip(self.bounds, self.shape))

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape ``(*shape, ndim)``."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = np.ones(x.shape[:-1], dtype=bool)
        for i, (lo, hi) in enumerate(self.bounds):
            inside &= (x[..., i] >= lo) & (x[..., i] <= hi)
        return inside

    def trapezoid_weights(self, mask=None) -> np.ndarray:
        """Trapezoidal quadrature weights at the nodes.

        With a boolean node ``mask`` (True = inside the integration domain),
        only cells whose corners are all inside contribute.
        """
        if mask is None:
            w = np.ones(())
            for h, n in zip(self.spacing, self.shape):
                w1 = np.full(n, h)
                w1[[0, -1]] *= 0.5
                w = np.multiply.outer(w, w1)
            return w
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != self.shape:
            raise InvalidField(f"mask shape {mask.shape} does not match grid {self.shape}")
        cell_area = float(np.prod(self.spacing))
        corners = 2**self.ndim
        w = np.zeros(self.shape)
        if self.ndim == 1:
            cells = mask[:-1] & mask[1:]
            share = cell_area / corners * cells
            w[:-1] += share
            w[1:] += share
        else:
            cells = mask[:-1, :-1] & mask[1:, :-1] & mask[:-1, 1:] & mask[1:, 1:]
            share = cell_area / corners * cells
            w[:-1, :-1] += share
            w[1:, :-1] += share
            w[:-1, 1:] += share
            w[1:, 1:] += share
        return w


class Extension(enum.Enum):
    """Policy for sampling a structured field outside its grid."""

    CONSTANT_NEAREST = "constant-nearest"
    ANALYTIC_CALLBACK = "analytic-callback"
    ERROR = "error"


def _as_values(v, components: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if components == 1 and (v.ndim == 0 or v.shape[-1] != 1):
        v = v[..., None]
    return v


@dataclass(frozen=True, eq=False)
class FieldFunction:
    """Analytic field wrapping a vectorised callable ``fn(points) -> values``.

    ``fn`` receives points of shape ``(..., dim)`` and may return either
    ``(..., components)`` or, for scalar fields, ``(...)``.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    dim: int = 1
    components: int = 1

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return _as_values(self.fn(x), self.components)


@dataclass(frozen=True, eq=False)
class StructuredField:
    """Nodal values on a :class:`Grid` with bilinear (linear in 1D) sampling."""

    grid: Grid
    values: np.ndarray
    extension: Extension = Extension.CONSTANT_NEAREST
    callback: Callable[[np.ndarray], np.ndarray] | None = field(default=None)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape == self.grid.shape:
            v = v[..., None]
        if v.shape[:-1] != self.grid.shape:
            raise InvalidField(f"values shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidField("field values must be finite")
        if self.extension is Extension.ANALYTIC_CALLBACK and self.callback is None:
            raise InvalidField("AnalyticCallback extension requires a callback")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.grid.ndim

    @property
    def components(self) -> int:
        return self.values.shape[-1]

    @classmethod
    def from_function(cls, fn, grid: Grid, **kwargs) -> StructuredField:
        """Sample a callable (e.g. a :class:`FieldFunction`) at the grid nodes."""
        return cls(grid, np.asarray(fn(grid.nodes()), dtype=float), **kwargs)

    def with_values(self, values) -> StructuredField:
        return StructuredField(self.grid, values, self.extension, self.callback)

    def __call__(self, x) -> np.ndarray:
        return sample(self, x)


def _interp_inside(f: StructuredField, x: np.ndarray) -> np.ndarray:
    idx, frac = [], []
    for i, ax in enumerate(f.grid.axes):
        xi = x[..., i]
        j = np.clip(np.searchsorted(ax, xi, side="right") - 1, 0, ax.size - 2)
        idx.append(j)
        frac.append((xi - ax[j]) / (ax[j + 1] - ax[j]))
    v = f.values
    if f.dim == 1:
        (j,), (t,) = idx, frac
        t = t[..., None]
        return v[j] * (1.0 - t) + v[j + 1] * t
    (j, k), (t, u) = idx, frac
    t, u = t[..., None], u[..., None]
    return (v[j, k] * (1.0 - t) + v[j + 1, k] * t) * (1.0 - u) + (
        v[j, k + 1] * (1.0 - t) + v[j + 1, k + 1] * t
    ) * u


def sample(f: StructuredField, x) -> np.ndarray:
    """Sample ``f`` at points ``x`` of shape (..., n); returns (..., d)."""
    x = np.asarray(x, dtype=float)
    if f.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != f.dim:
        raise InvalidField(f"points have trailing size {x.shape[-1]}, field is {f.dim}D")
    if not np.all(np.isfinite(x)):
        raise InvalidField("sample points must be finite")
    inside = f.grid.contains(x)
    if f.extension is Extension.CONSTANT_NEAREST or np.all(inside):
        lo = np.array([b[0] for b in f.grid.bounds])
        hi = np.array([b[1] for b in f.grid.bounds])
        return _interp_inside(f, np.clip(x, lo, hi))
    if f.extension is Extension.ERROR:
        bad = x[~inside][0]
        raise OutOfDomain(f"point {bad.tolist()} lies outside the grid bounds {f.grid.bounds}")
    out = np.empty(x.shape[:-1] + (f.components,))
    out[inside] = _interp_inside(f, x[inside])
    out[~inside] = _as_values(f.callback(x[~inside]), f.components)
    return out


def gradient_fd(f: StructuredField, component: int = 0) -> StructuredField:
    """Finite-difference gradient of one component.

    Central differences in the interior, first-order one-sided differences on
    the boundary. The result has one component per spatial axis.
    """
    if min(f.grid.shape) < 3:
        raise GridTooCoarse(f"need at least 3 nodes per axis, grid is {f.grid.shape}")
    v = f.values[..., component]
    grads = np.gradient(v, *f.grid.spacing, edge_order=1)
    if f.dim == 1:
        grads = [grads]
    return StructuredField(f.grid, np.stack(grads, axis=-1), f.extension)


def forward_difference(f: StructuredField, component: int = 0, axis: int = 0) -> np.ndarray:
    """Nodal forward difference quotient along ``axis`` (backward on the last node).

    The step is the grid spacing, so ``(U(x + h e_axis) - U(x)) / h`` is exact
    on grid data.
    """
    v = np.moveaxis(f.values[..., component], axis, 0)
    h = f.grid.spacing[axis]
    d = np.empty_like(v)
    d[:-1] = (v[1:] - v[:-1]) / h
    d[-1] = d[-2]
    return np.moveaxis(d, 0, axis)


def nodal_values(f, grid: Grid) -> np.ndarray:
    if isinstance(f, np.ndarray):
        v = f
    elif callable(f):
        if isinstance(f, StructuredField) and f.grid == grid:
            v = f.values
        else:
            v = f(grid.nodes())
    else:
        v = np.asarray(f, dtype=float)
    v = np.asarray(v, dtype=float)
    if v.shape == grid.shape:
        v = v[..., None]
    if v.ndim == 0:
        v = np.full(grid.shape + (1,), float(v))
    return v


def l2_norm(f, grid: Grid, mask=None) -> float:
    """Trapezoidal L2 norm of ``f`` (callable or nodal array) over ``grid``."""
    v = nodal_values(f, grid)
    w = grid.trapezoid_weights(mask)
    return float(np.sqrt(np.sum(w[..., None] * v * v)))


def l2_error(f, g, grid: Grid, mask=None) -> tuple[float, float]:
    """Absolute and relative L2 distance between ``f`` and reference ``g``.

    ``relative = ||f - g|| / ||g||``; raises :class:`ZeroReference` when the
    reference norm vanishes.
    """
    vf, vg = nodal_values(f, grid), nodal_values(g, grid)
    if vf.shape != vg.shape:
        raise InvalidField(f"incompatible fields: {vf.shape} vs {vg.shape}")
    w = grid.trapezoid_weights(mask)[..., None]
    d = vf - vg
    err = float(np.sqrt(np.sum(w * d * d)))
    ref = float(np.sqrt(np.sum(w * vg * vg)))
    if ref == 0.0:
        raise ZeroReference("reference field has zero L2 norm")
    return err, err / ref


def save_snapshot(f: StructuredField, path) -> None:
    """Write ``f`` in the text snapshot format (17 significant digits)."""
    g = f.grid
    n1 = g.shape[0]
    n2 = g.shape[1] if g.ndim == 2 else 1
    (x1lo, x1hi) = g.bounds[0]
    (x2lo, x2hi) = g.bounds[1] if g.ndim == 2 else (0.0, 0.0)
    rows = f.values.reshape(n1 * n2, f.components)
    with open(path, "w") as fh:
        fh.write(SNAPSHOT_HEADER + "\n")
        fh.write(f"{n1} {n2} {f.components} " + " ".join(f"{b:.17g}" for b in (x1lo, x1hi, x2lo, x2hi)) + "\n")
        for r in rows:
            fh.write(" ".join(f"{x:.17g}" for x in r) + "\n")


def load_snapshot(path, extension: Extension = Extension.CONSTANT_NEAREST) -> StructuredField:
    """Read a snapshot file; raises :class:`FormatError` with a line number."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != SNAPSHOT_HEADER:
        raise FormatError(f"expected header {SNAPSHOT_HEADER!r}", line=1)
    if len(lines) < 2:
        raise FormatError("missing grid line", line=2)
    head = lines[1].split()
    if len(head) != 7:
        raise FormatError("grid line must read 'n1 n2 d x1lo x1hi x2lo x2hi'", line=2)
    try:
        n1, n2, d = (int(t) for t in head[:3])
        x1lo, x1hi, x2lo, x2hi = (float(t) for t in head[3:])
    except ValueError as exc:
        raise FormatError(str(exc), line=2) from None
    if n1 < 2 or n2 < 1 or d < 1:
        raise FormatError(f"invalid sizes n1={n1} n2={n2} d={d}", line=2)
    body = lines[2:]
    while body and not body[-1].strip():
        body.pop()
    if len(body) != n1 * n2:
        raise FormatError(f"expected {n1 * n2} value rows, found {len(body)}", line=2 + len(body) + 1)
    values = np.empty((n1 * n2, d))
    for i, line in enumerate(body):
        toks = line.split()
        if len(toks) != d:
            raise FormatError(f"expected {d} values, found {len(toks)}", line=i + 3)
        try:
            values[i] = [float(t) for t in toks]
        except ValueError as exc:
            raise FormatError(str(exc), line=i + 3) from None
    try:
        if n2 == 1:
            grid = Grid(((x1lo, x1hi),), (n1,))
            values = values.reshape(n1, d)
        else:
            grid = Grid(((x1lo, x1hi), (x2lo, x2hi)), (n1, n2))
            values = values.reshape(n1, n2, d)
        return StructuredField(grid, values, extension)
    except InvalidField as exc:
        raise FormatError(str(exc), line=2) from None
