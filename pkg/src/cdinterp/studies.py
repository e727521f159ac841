"""Parameter studies and the detect -> fit -> map -> blend pipeline.

Every study returns a :class:`Table`; the command-line front end only parses
options and writes tables and sidecars.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .benchmarks import heat, simple_wave, sod, wedge, zkb
from .detection import (
    PointCloud,
    ducros_field,
    gradient_threshold,
    jump_threshold,
    mle_fit,
    select_points,
    select_top_fraction,
    sign_rule,
    split_clusters,
)
from .errors import EmptySelection, InvalidField, InvalidTime
from .fields import FieldFunction, Grid, StructuredField, l2_error
from .gaussian_ot import AffineTransportMap, Gaussian, eval_inverse, ot_map, wasserstein2
from .interpolation import (
    CdiOperator,
    cdi_eval,
    convex_eval,
    displacement_eval,
    project_s,
    project_s_convex,
)
from .registration import (
    GordonHallPatch,
    MapSpace,
    Markers,
    Polyline,
    RegistrationMap,
    Segment,
    ba_cdi_eval,
    fit_registration_multi,
    match_mixtures,
    min_jacobian_det,
)

DEFAULT_ALPHAS = tuple(np.round(np.linspace(0.1, 0.9, 9), 12))


@dataclass
class Table:
    """Rows of floats under a versioned schema name."""

    schema: str
    columns: tuple[str, ...]
    rows: list[tuple[float, ...]]
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[self.columns.index(name)] for r in self.rows])


def write_csv(table: Table, path) -> None:
    lines = [f"# schema: {table.schema}", ",".join(table.columns)]
    lines += [",".join(f"{float(v):.17g}" for v in row) for row in table.rows]
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path, schema: str | None = None) -> Table:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("# schema: "):
        raise InvalidField(f"{path}: missing schema line")
    found = text[0][len("# schema: ") :].strip()
    if schema is not None and found != schema:
        raise InvalidField(f"{path}: schema {found!r}, expected {schema!r}")
    cols = tuple(text[1].split(","))
    rows = [tuple(float(v) for v in line.split(",")) for line in text[2:] if line]
    if any(len(r) != len(cols) for r in rows):
        raise InvalidField(f"{path}: ragged rows")
    return Table(found, cols, rows)


# ---------------------------------------------------------------- self-similar benchmarks


def _interior_times(t0: float, t1: float, count: int) -> np.ndarray:
    if not 0 < t0:
        raise InvalidTime(f"t0 must be positive, got {t0}")
    if not t1 > t0:
        raise InvalidTime(f"need t1 > t0, got t0={t0}, t1={t1}")
    return t0 + (t1 - t0) * np.arange(1, count + 1) / (count + 1)


def _box_grid(half_width: float, n: int, nodes: int) -> Grid:
    return Grid(((-half_width, half_width),) * n, (nodes,) * n)


def _self_similar_table(schema, fields_at, model_at, rescale, t0, t1, times, grid) -> Table:
    op = CdiOperator.from_models(fields_at(t0), fields_at(t1), model_at(t0), model_at(t1))
    nodes = grid.nodes()
    rows = []
    for t in times:
        s = float(rescale(t))
        exact = fields_at(t)
        err = {}
        err["cdi"] = l2_error(cdi_eval(op, s, nodes), exact, grid)[1]
        err["convex"] = l2_error(convex_eval(op.u0, op.u1, s, nodes), exact, grid)[1]
        err["displacement"] = l2_error(displacement_eval(op, s, nodes), exact, grid)[1]
        rows.append((float(t), s, err["cdi"], err["convex"], err["displacement"]))
    cols = ("t", "rescaled_s", "rel_L2_cdi", "rel_L2_convex", "rel_L2_displacement")
    return Table(schema, cols, rows, {"map_matrix": op.map01.matrix.tolist()})


def bench_heat(n: int = 1, t0: float = 0.1, t1: float = 0.4, count: int = 5, nodes: int | None = None) -> Table:
    """Interpolants of the heat kernel between ``t0`` and ``t1`` against the exact kernel.

    Models use the exact moments ``N(0, 2 t I)``; ``s`` follows the square-root
    rescaling.
    """
    times = _interior_times(t0, t1, count)
    nodes = nodes or (4001 if n == 1 else 201)
    grid = _box_grid(10.0 * math.sqrt(2.0 * t1), n, nodes)
    table = _self_similar_table(
        "bench_heat/v1",
        lambda t: heat.heat_field(t, n),
        lambda t: heat.heat_gaussian(t, n),
        lambda t: heat.heat_rescaling(t, t0, t1),
        t0,
        t1,
        times,
        grid,
    )
    table.meta.update(n=n, t0=t0, t1=t1)
    return table


def bench_zkb(
    n: int = 1, m: int = 2, C: float = 1.0, t0: float = 0.1, t1: float = 0.4, count: int = 5, nodes: int | None = None
) -> Table:
    """Same study for the ZKB profile with the ``t^beta`` rescaling."""
    times = _interior_times(t0, t1, count)
    nodes = nodes or (8001 if n == 1 else 201)
    grid = _box_grid(1.25 * zkb.zkb_support_radius(t1, n, m, C), n, nodes)
    table = _self_similar_table(
        "bench_zkb/v1",
        lambda t: zkb.zkb_field(t, n, m, C),
        lambda t: zkb.zkb_gaussian(t, n, m, C),
        lambda t: zkb.zkb_rescaling(t, t0, t1, n, m),
        t0,
        t1,
        times,
        grid,
    )
    table.meta.update(n=n, m=m, C=C, t0=t0, t1=t1)
    return table


def bench_sod(t0: float = 0.1, t1: float = 0.25, count: int = 5, nodes: int = 2001) -> Table:
    """Sod densities transported by the dilation ``x -> (t1/t0) x``.

    The transported density ``rho(t0, R(s, x))`` with ``s`` linear in ``t`` is
    compared with the exact density; the pointwise maximum excludes points
    within ``1e-9`` of a discontinuity in ``x / t``.
    """
    times = _interior_times(t0, t1, count)
    st = sod.sod_state()
    grid = Grid(((-0.5, 0.5),), (nodes,))
    x = grid.axes[0]

    def density(t):
        return FieldFunction(lambda y: sod.sod_exact(st, t, y[..., 0])[0])

    u0, u1 = density(t0), density(t1)
    ratio = t1 / t0
    tmap = AffineTransportMap(np.array([[ratio]]), np.zeros(1), np.zeros(1))
    g0, g1 = Gaussian([0.0], [[1.0]]), Gaussian([0.0], [[ratio**2]])
    op = CdiOperator(u0, u1, tmap, ot_map(g1, g0), g0, g1)
    w = sod.wave_speeds(st)
    jumps = [w["contact"], w["r"]["head"]] if w["r"]["type"] == "shock" else [w["contact"]]
    if w["l"]["type"] == "shock":
        jumps.append(w["l"]["head"])
    rows = []
    for t in times:
        s = float((t - t0) / (t1 - t0))
        exact = sod.sod_exact(st, t, x)[0]
        transported = u0(eval_inverse(tmap, s, x[:, None]))[:, 0]
        keep = np.all(np.abs(x[:, None] / t - np.array(jumps)[None, :]) > 1e-9, axis=1)
        max_err = float(np.max(np.abs(transported - exact)[keep]))
        rel_t = l2_error(transported, exact, grid)[1]
        rel_cdi = l2_error(cdi_eval(op, s, x[:, None]), exact, grid)[1]
        rel_co = l2_error(convex_eval(u0, u1, s, x[:, None]), exact, grid)[1]
        rows.append((float(t), s, max_err, rel_t, rel_cdi, rel_co))
    cols = ("t", "s", "max_err_transport", "rel_L2_transport", "rel_L2_cdi", "rel_L2_convex")
    return Table("bench_sod/v1", cols, rows, {"t0": t0, "t1": t1, "p_star": w["p_star"], "u_star": w["u_star"]})


# ---------------------------------------------------------------- simple wave


@dataclass(frozen=True)
class SimpleWaveSetup:
    t0: float = 0.05
    t1: float = 0.4
    eps: float = 1e-4
    detect_grid: Grid = Grid(((-2.0, 8.0),), (1001,))
    error_grid: Grid = Grid(((-2.0, 8.0),), (2001,))


def simple_wave_models(setup: SimpleWaveSetup = SimpleWaveSetup()):
    """Snapshots at ``t0``, ``t1`` and their Gaussian models from ``|du/dx| > eps``."""
    prob = simple_wave.paper_simple_wave()
    u0 = simple_wave.velocity_field(prob, setup.t0)
    u1 = simple_wave.velocity_field(prob, setup.t1)
    models = []
    for u in (u0, u1):
        f = StructuredField.from_function(u, setup.detect_grid)
        cloud = select_points(setup.detect_grid.nodes(), gradient_threshold(f, setup.eps))
        models.append(mle_fit(cloud))
    return prob, CdiOperator.from_models(u0, u1, *models)


def bench_simplewave(alphas: Sequence[float] = DEFAULT_ALPHAS, setup: SimpleWaveSetup = SimpleWaveSetup()) -> Table:
    """Optimal ``s`` and projection errors for ``u(t_alpha, .)``, ``t_alpha = (1-a) t0 + a t1``."""
    prob, op = simple_wave_models(setup)
    rows = []
    for a in alphas:
        t = (1.0 - a) * setup.t0 + a * setup.t1
        target = simple_wave.velocity_field(prob, t)
        s_cdi, e_cdi = project_s(op, target, setup.error_grid)
        s_co, e_co = project_s_convex(op.u0, op.u1, target, setup.error_grid)
        rows.append((float(a), s_cdi, s_co, e_cdi, e_co))
    meta = {"g0": op.g0.to_dict(), "g1": op.g1.to_dict(), "t0": setup.t0, "t1": setup.t1}
    return Table("bench_simplewave/v1", ("alpha", "s_cdi", "s_convex", "err_cdi", "err_convex"), rows, meta)


# ---------------------------------------------------------------- wedge


WEDGE_ENDPOINTS = ((5.0, 28.275), (8.0, 22.80))
WEDGE_BOUNDS = ((-0.5, 1.0), (0.0, 1.0))


@dataclass(frozen=True)
class WedgeSetup:
    endpoints: tuple[tuple[float, float], tuple[float, float]] = WEDGE_ENDPOINTS
    shape: tuple[int, int] = (151, 101)
    gamma: float = 1.4

    @property
    def grid(self) -> Grid:
        return Grid(WEDGE_BOUNDS, self.shape)

    def problem(self, alpha: float) -> wedge.WedgeProblem:
        (m0, d0), (m1, d1) = self.endpoints
        return wedge.WedgeProblem.from_degrees((1 - alpha) * m0 + alpha * m1, (1 - alpha) * d0 + alpha * d1, self.gamma)

    @property
    def delta_bar(self) -> float:
        return 0.5 * (self.problem(0.0).delta + self.problem(1.0).delta)


def flow_mask(grid: Grid, delta: float) -> np.ndarray:
    """Nodes of the flow region above the wedge of angle ``delta``."""
    x = grid.nodes()
    return ~((x[..., 0] >= 0) & (x[..., 1] < x[..., 0] * math.tan(delta)))


def wedge_snapshot(setup: WedgeSetup, alpha: float, mode: str) -> FieldFunction:
    """Mach field at parameter ``alpha``; in registration mode composed with ``Phi``."""
    p = setup.problem(alpha)
    field_ = wedge.wedge_mach_field(p)
    if mode == "extension":
        return field_
    if mode != "registration":
        raise InvalidField(f"unknown wedge mode {mode!r}")
    dbar = setup.delta_bar
    return FieldFunction(lambda x: field_(wedge.wedge_phi(x, p.delta, dbar))[..., 0], dim=2)


def wedge_detect(f, grid: Grid, mask=None, threshold: float = 1.0) -> PointCloud:
    sf = f if isinstance(f, StructuredField) else StructuredField.from_function(f, grid)
    t = jump_threshold(sf, threshold, component=0, axis=0)
    if mask is not None:
        t = np.where(mask, t, -1.0)
    return select_points(grid.nodes(), t)


def wedge_operator(setup: WedgeSetup, mode: str) -> tuple[CdiOperator, list[PointCloud]]:
    grid = setup.grid
    mask = flow_mask(grid, setup.delta_bar) if mode == "registration" else None
    u0, u1 = wedge_snapshot(setup, 0.0, mode), wedge_snapshot(setup, 1.0, mode)
    clouds = [wedge_detect(u, grid, mask) for u in (u0, u1)]
    return CdiOperator.from_models(u0, u1, mle_fit(clouds[0]), mle_fit(clouds[1])), clouds


def bench_wedge(
    mode: str = "extension",
    alphas: Sequence[float] = DEFAULT_ALPHAS,
    setup: WedgeSetup = WedgeSetup(),
) -> Table:
    """Projection study for the wedge family.

    Extension mode compares fields on the whole rectangle and measures errors
    on the flow region of the target; registration mode works on fields
    pulled back to the flow region of the mean wedge angle.
    """
    grid = setup.grid
    op, clouds = wedge_operator(setup, mode)
    rows = []
    for a in alphas:
        target = wedge_snapshot(setup, a, mode)
        delta = setup.problem(a).delta if mode == "extension" else setup.delta_bar
        mask = flow_mask(grid, delta)
        s_cdi, e_cdi = project_s(op, target, grid, mask)
        s_co, e_co = project_s_convex(op.u0, op.u1, target, grid, mask)
        rows.append((float(a), s_cdi, s_co, e_cdi, e_co))
    meta = {
        "mode": mode,
        "g0": op.g0.to_dict(),
        "g1": op.g1.to_dict(),
        "selected": [len(c) for c in clouds],
        "shock": [list(wedge.wedge_shock_angle(setup.problem(a))) for a in (0.0, 1.0)],
    }
    return Table(f"bench_wedge_{mode}/v1", ("alpha", "s_cdi", "s_convex", "err_cdi", "err_convex"), rows, meta)


def wedge_patch(delta_bar: float) -> GordonHallPatch:
    """Flow region above the wedge of angle ``delta_bar`` inside the reference rectangle."""
    (a, b), (c, d) = WEDGE_BOUNDS
    tip = (b, c + (b - 0.0) * math.tan(delta_bar))
    return GordonHallPatch(
        Polyline([(a, c), (0.0, c), tip]),
        Segment(tip, (b, d)),
        Segment((a, d), (b, d)),
        Segment((a, c), (a, d)),
    )


# ---------------------------------------------------------------- generic pipeline


@dataclass(frozen=True)
class DetectOptions:
    """Testing-function choice for the pipeline.

    ``method`` is ``gradient`` (``|grad U| > threshold``), ``jump`` (forward
    jump along ``axis``) or ``ducros`` (top ``top_fraction`` of the sensor on
    a (rho, u1, u2, p) field).
    """

    method: str = "gradient"
    threshold: float = 1.0
    top_fraction: float = 0.005
    component: int = 0
    axis: int = 0

    def testing_values(self, f: StructuredField) -> np.ndarray:
        if self.method == "gradient":
            return gradient_threshold(f, self.threshold, self.component)
        if self.method == "jump":
            return jump_threshold(f, self.threshold, self.component, self.axis)
        if self.method == "ducros":
            return ducros_field(f)
        raise InvalidField(f"unknown testing method {self.method!r}")


def detect(f: StructuredField, opts: DetectOptions, mask=None) -> PointCloud:
    values = opts.testing_values(f)
    nodes = f.grid.nodes()
    if opts.method == "ducros":
        if mask is not None:
            nodes, values = nodes[mask], values[mask]
        return select_top_fraction(nodes, values, opts.top_fraction)
    if mask is not None:
        values = np.where(mask, values, -np.inf)
    try:
        return select_points(nodes, values)
    except EmptySelection as exc:
        finite = values[np.isfinite(values)]
        peak = float(finite.max()) if finite.size else float("nan")
        raise EmptySelection(
            f"{exc}; method={opts.method} threshold={opts.threshold} "
            f"max testing value {peak:.6g} on {f.grid.shape} grid"
        ) from None


def fit_gaussian(f: StructuredField, opts: DetectOptions, mask=None) -> tuple[Gaussian, PointCloud]:
    cloud = detect(f, opts, mask)
    return mle_fit(cloud), cloud


def interp_snapshots(
    f0: StructuredField, f1: StructuredField, s_values: Sequence[float], opts: DetectOptions
) -> tuple[list[StructuredField], dict]:
    """CDI snapshots on the grid of ``f0`` plus a description of the models and maps."""
    if f0.grid != f1.grid:
        raise InvalidField("snapshots must share a grid")
    if f0.components != f1.components:
        raise InvalidField("snapshots must have the same number of components")
    g0, c0 = fit_gaussian(f0, opts)
    g1, c1 = fit_gaussian(f1, opts)
    op = CdiOperator.from_models(f0, f1, g0, g1)
    nodes = f0.grid.nodes()
    out = []
    same = np.array_equal(f0.values, f1.values)
    for s in s_values:
        # identical inputs make every interpolant equal to the input; skip the roundoff
        out.append(f0 if s == 0.0 or same else f0.with_values(cdi_eval(op, s, nodes)))
    sidecar = {
        "g0": g0.to_dict(),
        "g1": g1.to_dict(),
        "w2": wasserstein2(g0, g1),
        "map01": op.map01.to_dict(),
        "map10": op.map10.to_dict(),
        "selected": [len(c0), len(c1)],
        "s": [float(s) for s in s_values],
    }
    return out, sidecar


def _cluster_models(f: StructuredField, opts: DetectOptions, mask, rule):
    cloud = detect(f, opts, mask)
    clouds = split_clusters(cloud, rule) if rule is not None else [cloud]
    return clouds, [mle_fit(c) for c in clouds]


def _markers(clouds, maps, patch: GordonHallPatch) -> Markers:
    src, tgt, lab = [], [], []
    for k, (c, tmap) in enumerate(zip(clouds, maps)):
        inside = patch.contains(c.points)
        src.append(c.points[inside])
        tgt.append(tmap(c.points[inside]))
        lab.append(np.full(int(inside.sum()), k))
    return Markers(np.concatenate(src), np.concatenate(tgt), np.concatenate(lab))


def _marker_sets(markers: Markers):
    labels = markers.clusters if markers.clusters is not None else np.zeros(len(markers), int)
    return [(markers.sources[labels == k], markers.targets[labels == k]) for k in np.unique(labels)]


@dataclass
class RegistrationResult:
    r01: RegistrationMap
    r10: RegistrationMap
    markers01: Markers
    markers10: Markers
    permutation: tuple[int, ...]
    models0: list[Gaussian]
    models1: list[Gaussian]
    snapshots: list[StructuredField]
    certificates: list[dict]
    operator: CdiOperator | None

    def sidecar(self) -> dict:
        return {
            "permutation": list(self.permutation),
            "models0": [g.to_dict() for g in self.models0],
            "models1": [g.to_dict() for g in self.models1],
            "r01": self.r01.to_dict(),
            "r10": self.r10.to_dict(),
            "certificates": self.certificates,
        }


def register_snapshots(
    f0: StructuredField,
    f1: StructuredField,
    patch: GordonHallPatch,
    s_values: Sequence[float],
    opts: DetectOptions,
    degree: int = 4,
    lam: float | None = None,
    delta_min: float = 0.1,
    cluster_axis: int | None = None,
    mask=None,
) -> RegistrationResult:
    """Detection, mixture matching, two-way map fits and BA-CDI snapshots.

    Detection is restricted to ``mask`` (default: nodes inside the patch).
    Points of the grid outside the patch fall back to plain CDI built from the
    first matched pair of models.
    """
    if f0.grid != f1.grid:
        raise InvalidField("snapshots must share a grid")
    if mask is None:
        # only structures inside the patch can drive the maps
        mask = patch.contains(f0.grid.nodes())
    rule = sign_rule(cluster_axis) if cluster_axis is not None else None
    clouds0, models0 = _cluster_models(f0, opts, mask, rule)
    clouds1, models1 = _cluster_models(f1, opts, mask, rule)
    if len(models0) != len(models1):
        raise InvalidField(f"snapshots have {len(models0)} and {len(models1)} structures")
    perm = match_mixtures(models0, models1)
    clouds1 = [clouds1[i] for i in perm]
    models1 = [models1[i] for i in perm]
    maps01 = [ot_map(g0, g1) for g0, g1 in zip(models0, models1)]
    maps10 = [ot_map(g1, g0) for g0, g1 in zip(models0, models1)]
    space = MapSpace(patch, degree)
    m01 = _markers(clouds0, maps01, patch)
    m10 = _markers(clouds1, maps10, patch)
    r01 = fit_registration_multi(space, _marker_sets(m01), lam=lam, delta_min=delta_min)
    r10 = fit_registration_multi(space, _marker_sets(m10), lam=lam, delta_min=delta_min)
    op = CdiOperator.from_models(f0, f1, models0[0], models1[0])
    nodes = f0.grid.nodes()
    snaps, certs = [], []
    for s in s_values:
        vals = ba_cdi_eval(f0, f1, r01, r10, s, nodes, fallback=op)
        snaps.append(f0 if s == 0.0 else f0.with_values(vals))
        certs.append(
            {
                "s": float(s),
                "min_det_01": min_jacobian_det(r01, [1.0 - s]),
                "min_det_10": min_jacobian_det(r10, [s]),
            }
        )
    return RegistrationResult(r01, r10, m01, m10, perm, models0, models1, snaps, certs, op)


def wedge_registration(setup: WedgeSetup = WedgeSetup(), degree: int = 4, lam: float | None = None) -> RegistrationResult:
    """BA registration between the registration-mode wedge snapshots at ``alpha = 0`` and 1."""
    grid = setup.grid
    dbar = setup.delta_bar
    f0 = StructuredField.from_function(wedge_snapshot(setup, 0.0, "registration"), grid)
    f1 = StructuredField.from_function(wedge_snapshot(setup, 1.0, "registration"), grid)
    opts = DetectOptions(method="jump", threshold=1.0, axis=0)
    return register_snapshots(
        f0, f1, wedge_patch(dbar), [0.0, 0.25, 0.5, 0.75, 1.0], opts, degree=degree, lam=lam
    )
