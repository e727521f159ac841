from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss

from cdinterp.errors import DimensionError, FormatError, InvalidPatch, InversionFailed, OutOfPatch
from cdinterp.fields import FieldFunction
from cdinterp.gaussian_ot import Gaussian, wasserstein2
from cdinterp.interpolation import convex_eval
from cdinterp.registration import (
    Arc,
    Markers,
    MapSpace,
    RegistrationMap,
    Segment,
    ba_cdi_eval,
    eval_map,
    fit_registration,
    fit_registration_multi,
    gordon_hall,
    h2_penalty,
    load_markers,
    match_mixtures,
    min_jacobian_det,
    rectangle_patch,
    save_markers,
)
from cdinterp.registration import h2_quadrature

from conftest import random_spd

S_CHECK = (0.0, 0.25, 0.5, 0.75, 1.0)


def arc_patch():
    # unit square whose top edge bulges upward along a circular arc
    r = 1.0 / (2 * math.sin(math.pi / 6))
    c = np.array([0.5, 1.0 - r * math.cos(math.pi / 6)])
    top = Arc(c, r, math.pi / 2 + math.pi / 6, math.pi / 2 - math.pi / 6)
    return gordon_hall(Segment((0, 0), (1, 0)), Segment((1, 0), (1, 1)), top, Segment((0, 0), (0, 1))), top, c, r


def test_square_is_identity(rng):
    p = rectangle_patch(((0.0, 1.0), (0.0, 1.0)))
    xi = rng.uniform(size=(100, 2))
    assert np.allclose(p(xi), xi, rtol=0, atol=1e-15)
    assert np.allclose(p.jacobian(xi), np.eye(2))


def test_affine_quadrilateral_exact(rng):
    p00, e1, e2 = np.array([1.0, -2.0]), np.array([2.0, 0.5]), np.array([-0.3, 1.5])
    patch = gordon_hall(
        Segment(p00, p00 + e1), Segment(p00 + e1, p00 + e1 + e2), Segment(p00 + e2, p00 + e1 + e2), Segment(p00, p00 + e2)
    )
    xi = rng.uniform(size=(200, 2))
    assert np.max(np.abs(patch(xi) - (p00 + xi[:, :1] * e1 + xi[:, 1:] * e2))) <= 1e-13


def test_arc_edge_and_inverse(rng):
    patch, top, c, r = arc_patch()
    t = np.linspace(0, 1, 101)
    edge = patch(np.column_stack([t, np.ones_like(t)]))
    assert np.max(np.abs(edge - top(t))) <= 1e-12
    assert np.max(np.abs(np.linalg.norm(edge - c, axis=1) - r)) <= 1e-12
    xi = rng.uniform(0.01, 0.99, size=(300, 2))
    assert np.max(np.abs(patch.inverse(patch(xi)) - xi)) <= 1e-10


def test_patch_errors():
    with pytest.raises(InvalidPatch):
        gordon_hall(Segment((0, 0), (1, 0)), Segment((1, 0), (1, 1)), Segment((0, 1), (1, 1.1)), Segment((0, 0), (0, 1)))
    patch = rectangle_patch(((0.0, 1.0), (0.0, 1.0)))
    _, top, _, _ = arc_patch()
    with pytest.raises(InversionFailed):
        arc_patch()[0].inverse([[0.5, 1.2]], max_iter=1)
    with pytest.raises(OutOfPatch):
        eval_map(RegistrationMap.identity(MapSpace(patch)), 0.5, [[1.5, 0.5]])


def test_space_size_and_boundary_conformity(rng):
    space = MapSpace(rectangle_patch(((0.0, 1.0), (0.0, 1.0))), 4)
    assert space.size == 30 <= 2 * 5**2
    t = rng.uniform(size=50)
    for fixed, comp in ((0.0, 0), (1.0, 0)):
        v = space.values(np.column_stack([np.full_like(t, fixed), t]))
        assert np.max(np.abs(v[:, comp])) <= 1e-14
        v = space.values(np.column_stack([t, np.full_like(t, fixed)]))
        assert np.max(np.abs(v[:, 1 - comp])) <= 1e-14
    g = space.gram_h2
    assert np.allclose(g, g.T) and np.linalg.eigvalsh(g).min() >= -1e-10
    with pytest.raises(InvalidPatch):
        MapSpace(space.patch, 1)


def test_h2_penalty_examples():
    space = MapSpace(rectangle_patch(((0.0, 1.0), (0.0, 1.0))), 4)
    assert h2_penalty(space, np.zeros(space.size)) == 0.0
    # mode 0 is xi1 (1 - xi1) in the first component: |D^2|^2 = 4
    e = np.zeros(space.size)
    e[0] = 1.0
    assert abs(h2_penalty(space, e) - 4.0) <= 1e-10
    # an affine map has zero second derivatives
    assert h2_quadrature(lambda x: np.zeros(x.shape[:-1] + (2, 2, 2)), 6) == 0.0


def test_h2_penalty_against_dense_fd_oracle(rng):
    space = MapSpace(rectangle_patch(((0.0, 1.0), (0.0, 1.0))), 4)
    a = rng.normal(size=space.size)
    t, w = leggauss(40)
    t, w = 0.5 * (t + 1), 0.5 * w
    X = np.stack(np.meshgrid(t, t, indexing="ij"), -1).reshape(-1, 2)
    W = np.outer(w, w).reshape(-1)
    h = 1e-4
    f = lambda p: space.displacement(a, p)  # noqa: E731
    e1, e2 = np.array([h, 0.0]), np.array([0.0, h])
    fxx = (f(X + e1) - 2 * f(X) + f(X - e1)) / h**2
    fyy = (f(X + e2) - 2 * f(X) + f(X - e2)) / h**2
    fxy = (f(X + e1 + e2) - f(X + e1 - e2) - f(X - e1 + e2) + f(X - e1 - e2)) / (4 * h * h)
    oracle = float(np.sum(W[:, None] * (fxx**2 + 2 * fxy**2 + fyy**2)))
    assert abs(h2_penalty(space, a) - oracle) <= 1e-5 * oracle
    exact = h2_quadrature(lambda p: _hess(space, a, p), 30)
    assert abs(h2_penalty(space, a) - exact) <= 1e-10 * exact


def _hess(space, a, p):
    xx, xy, yy = (h @ a for h in space.hessians(p))
    return np.stack([np.stack([xx, xy], -1), np.stack([xy, yy], -1)], -1)


def test_identity_and_zero_maps(rng):
    patch, *_ = arc_patch()
    space = MapSpace(patch, 3)
    x = patch(rng.uniform(size=(40, 2)))
    r = RegistrationMap(space, rng.normal(size=space.size) * 0.01)
    assert np.array_equal(eval_map(r, 0.0, x), x)
    z = RegistrationMap.identity(space)
    for s in S_CHECK:
        assert np.array_equal(eval_map(z, s, x), x)
    assert min_jacobian_det(z) == 1.0


def boundary_points(n=25):
    t = np.linspace(0, 1, n)
    z, o = np.zeros(n), np.ones(n)
    return {
        "bottom": np.column_stack([t, z]),
        "top": np.column_stack([t, o]),
        "left": np.column_stack([z, t]),
        "right": np.column_stack([o, t]),
    }


def test_boundary_normal_deviation_curved_patch(rng):
    patch, top, c, r = arc_patch()
    space = MapSpace(patch, 4)
    m = RegistrationMap(space, rng.normal(size=space.size) * 0.02)
    for s in S_CHECK:
        for name, xi in boundary_points().items():
            y = eval_map(m, s, patch(xi))
            if name == "top":
                dev = np.abs(np.linalg.norm(y - c, axis=1) - r)
            elif name == "bottom":
                dev = np.abs(y[:, 1])
            else:
                dev = np.abs(y[:, 0] - (0.0 if name == "left" else 1.0))
            assert dev.max() <= 1e-10, (name, s)


def test_fit_identical_markers(rng):
    space = MapSpace(rectangle_patch(((0.0, 2.0), (0.0, 1.0))), 4)
    y = rng.uniform([0.1, 0.1], [1.9, 0.9], size=(20, 2))
    r = fit_registration(space, y, y)
    assert np.max(np.abs(r.coeffs)) <= 1e-12
    assert r.report.post_rms <= 1e-12 and r.report.warning is None


def test_fit_tangential_shift_representable():
    space = MapSpace(rectangle_patch(((0.0, 1.0), (0.0, 1.0))), 4)
    y = np.array([[0.3, 0.0], [0.5, 0.0], [0.7, 0.0]])
    t = y + [0.05, 0.0]
    # the residual vanishes as the penalty goes to zero; a tiny one keeps the problem well posed
    r = fit_registration(space, y, t, lam=1e-12, gtol=1e-10)
    assert r.report.post_rms <= 1e-8
    assert r.report.min_det >= 0.1
    # the images stay on the edge
    assert np.max(np.abs(eval_map(r, 1.0, y)[:, 1])) <= 1e-14


def synthetic_markers(rng, n=30):
    y = rng.uniform([0.15, 0.15], [0.85, 0.85], size=(n, 2))
    t = y + 0.08 * np.column_stack([np.sin(3 * y[:, 1]), np.cos(2 * y[:, 0])])
    return y, t


def test_fit_history_monotone_and_certificate(rng):
    patch, *_ = arc_patch()
    space = MapSpace(patch, 4)
    y, t = synthetic_markers(rng)
    r = fit_registration(space, y, t)
    rep = r.report
    assert rep.post_rms <= 0.5 * rep.pre_rms
    assert rep.min_det >= 0.1 and rep.feasible
    assert np.isclose(min_jacobian_det(r), rep.min_det)
    for stage in range(5):
        vals = [v for k, v in rep.history if k == stage]
        assert len(vals) >= 1
        assert all(b <= a + 1e-12 * abs(a) for a, b in zip(vals, vals[1:]))


def test_multi_fit_single_set_bitwise(rng):
    space = MapSpace(rectangle_patch(((0.0, 1.0), (0.0, 1.0))), 3)
    y, t = synthetic_markers(rng, 12)
    a = fit_registration(space, y, t)
    b = fit_registration_multi(space, [(y, t)])
    assert np.array_equal(a.coeffs, b.coeffs)
    c = fit_registration_multi(space, [(y[:5], t[:5]), (y[5:], t[5:])])
    assert np.array_equal(a.coeffs, c.coeffs)


def test_fit_respects_bijectivity_bound():
    # a marker pair demanding a fold is pulled back to a map with det >= delta_min
    space = MapSpace(rectangle_patch(((0.0, 1.0), (0.0, 1.0))), 3)
    y = np.array([[0.4, 0.5], [0.6, 0.5]])
    t = np.array([[0.7, 0.5], [0.3, 0.5]])
    r = fit_registration(space, y, t, lam=0.0)
    assert min_jacobian_det(r) >= 0.1
    assert r.report.post_rms > 0.05


def test_fit_errors():
    space = MapSpace(rectangle_patch(((0.0, 1.0), (0.0, 1.0))), 3)
    with pytest.raises(DimensionError):
        fit_registration(space, np.zeros((0, 2)), np.zeros((0, 2)))
    with pytest.raises(OutOfPatch):
        fit_registration(space, [[2.0, 0.5]], [[2.0, 0.5]])


def brute_force(m0, m1):
    best = min(itertools.permutations(range(len(m0))), key=lambda p: (sum(wasserstein2(m0[k], m1[p[k]]) for k in range(len(m0))), p))
    return best


def test_match_mixtures(rng):
    g = Gaussian([0.0, 0.0], np.eye(2))
    assert match_mixtures([g], [g]) == (0,)
    a, b = Gaussian([-5.0, 0.0], np.eye(2)), Gaussian([5.0, 0.0], np.eye(2))
    assert match_mixtures([a, b], [b, a]) == (1, 0)
    for _ in range(30):
        for n in (2, 3):
            m0 = [Gaussian(rng.normal(size=2) * 2, random_spd(rng, 2)) for _ in range(n)]
            m1 = [Gaussian(rng.normal(size=2) * 2, random_spd(rng, 2)) for _ in range(n)]
            perm = match_mixtures(m0, m1)
            assert perm == brute_force(m0, m1)
            tot = sum(wasserstein2(m0[k], m1[perm[k]]) for k in range(n))
            assert tot <= sum(wasserstein2(m0[k], m1[k]) for k in range(n)) + 1e-12
    with pytest.raises(DimensionError):
        match_mixtures([g], [g, g])


def test_ba_cdi(rng):
    patch, *_ = arc_patch()
    space = MapSpace(patch, 3)
    u0 = FieldFunction(lambda x: np.sin(3 * x[..., 0]) + x[..., 1], dim=2)
    u1 = FieldFunction(lambda x: np.cos(2 * x[..., 1]) * x[..., 0], dim=2)
    r01 = RegistrationMap(space, rng.normal(size=space.size) * 0.01)
    r10 = RegistrationMap(space, rng.normal(size=space.size) * 0.01)
    x = patch(rng.uniform(size=(50, 2)))
    assert np.array_equal(ba_cdi_eval(u0, u1, r01, r10, 0.0, x), u0(x))
    assert np.array_equal(ba_cdi_eval(u0, u1, r01, r10, 1.0, x), u1(x))
    z = RegistrationMap.identity(space)
    for s in (0.3, 0.6):
        assert np.allclose(ba_cdi_eval(u0, u1, z, z, s, x), convex_eval(u0, u1, s, x), rtol=0, atol=1e-15)
    with pytest.raises(OutOfPatch):
        ba_cdi_eval(u0, u1, z, z, 0.5, [[3.0, 3.0]])


def test_markers_roundtrip(tmp_path, rng):
    m = Markers(rng.normal(size=(7, 2)), rng.normal(size=(7, 2)), [0, 1, 1, 0, 0, 1, 1])
    save_markers(m, tmp_path / "m.txt")
    back = load_markers(tmp_path / "m.txt")
    assert np.array_equal(back.sources, m.sources) and np.array_equal(back.targets, m.targets)
    assert np.array_equal(back.clusters, m.clusters)
    m2 = Markers(m.sources, m.targets)
    save_markers(m2, tmp_path / "n.txt")
    assert load_markers(tmp_path / "n.txt").clusters is None


def test_markers_format_errors(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("# cdi-markers v1\n0 0 1 1\n0 0 1\n")
    with pytest.raises(FormatError) as e:
        load_markers(p)
    assert e.value.line == 3
    p.write_text("# cdi-markers v1\n0 0 1 1 0\n0 0 1 1\n")
    with pytest.raises(FormatError) as e:
        load_markers(p)
    assert e.value.line == 3
    p.write_text("# nope\n")
    with pytest.raises(FormatError) as e:
        load_markers(p)
    assert e.value.line == 1
