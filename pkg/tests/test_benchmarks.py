from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import brentq

from cdinterp.benchmarks import (
    RiemannState,
    SimpleWaveProblem,
    WedgeProblem,
    heat_gaussian,
    heat_kernel,
    paper_simple_wave,
    shock_relation_residuals,
    simple_wave_solution,
    sod_exact,
    sod_state,
    star_state,
    wave_speeds,
    wedge_geometry_maps,
    wedge_lambda,
    wedge_mach_field,
    wedge_phi,
    wedge_shock_angle,
    wedge_theta,
    zkb_gaussian,
    zkb_profile,
    zkb_support_radius,
)
from cdinterp.benchmarks.simple_wave import _foot, characteristic
from cdinterp.detection import density_fit
from cdinterp.errors import (
    CharacteristicsCrossed,
    DetachedShock,
    InvalidExponent,
    InvalidTime,
    MapSingular,
    VacuumError,
)
from cdinterp.gaussian_ot import ot_map

SOD_P_STAR = 0.3031301780506468
SOD_U_STAR = 0.9274526200489499


# heat kernel


def test_heat_prefactor():
    assert math.isclose(float(heat_kernel(1 / (4 * math.pi), 0.0, 1)), 1.0, rel_tol=1e-15)


def test_heat_invalid_time():
    with pytest.raises(InvalidTime):
        heat_kernel(0.0, 0.0, 1)


def test_heat_normalization():
    for t in (0.1, 0.4):
        assert abs(quad(lambda x: float(heat_kernel(t, x, 1)), -np.inf, np.inf)[0] - 1) <= 1e-8
        x = np.linspace(-20 * np.sqrt(t), 20 * np.sqrt(t), 801)
        X = np.stack(np.meshgrid(x, x, indexing="ij"), -1)
        h = x[1] - x[0]
        assert abs(heat_kernel(t, X, 2).sum() * h * h - 1) <= 1e-8


def test_heat_self_similarity(rng):
    t0 = 0.1
    for n in (1, 2):
        for _ in range(50):
            t = rng.uniform(0.05, 2.0)
            x = rng.normal(size=n)
            lhs = heat_kernel(t, x, n)
            rhs = heat_kernel(t0, np.sqrt(t0 / t) * x, n) * (t0 / t) ** (n / 2)
            assert np.isclose(lhs, rhs, rtol=1e-12)


def test_heat_map_from_exact_and_fitted_moments():
    t0, t1 = 0.1, 0.4
    exact = ot_map(heat_gaussian(t0, 2), heat_gaussian(t1, 2)).matrix
    assert np.allclose(exact, np.sqrt(t1 / t0) * np.eye(2), rtol=0, atol=1e-6)
    fits = []
    for t in (t0, t1):
        # samples restricted to a finite window around the bulk
        x = np.linspace(-3 * np.sqrt(2 * t), 3 * np.sqrt(2 * t), 121)
        X = np.stack(np.meshgrid(x, x, indexing="ij"), -1).reshape(-1, 2)
        fits.append(density_fit(X, heat_kernel(t, X, 2)))
    a = ot_map(*fits).matrix
    assert np.allclose(a, np.sqrt(t1 / t0) * np.eye(2), rtol=0, atol=0.02 * np.sqrt(t1 / t0))


# ZKB


def test_zkb_outside_support():
    r = zkb_support_radius(0.2)
    assert zkb_profile(0.2, 1.01 * r, 1) == 0.0
    assert zkb_profile(0.2, 0.99 * r, 1) > 0.0


def test_zkb_invalid_exponent():
    for m in (1, 0.5, 2.5):
        with pytest.raises(InvalidExponent):
            zkb_profile(0.1, 0.0, 1, m=m)


def test_zkb_mass_conservation():
    masses = []
    for t in (0.1, 0.4):
        r = zkb_support_radius(t)
        masses.append(quad(lambda x: float(zkb_profile(t, x, 1)), -r, r, epsabs=1e-13)[0])
    assert abs(masses[0] - masses[1]) <= 1e-6


def test_zkb_self_similarity(rng):
    t0, t1 = 0.1, 0.4
    for n in (1, 2):
        alpha, beta = n / (n + 2), 1 / (n + 2)
        r0 = zkb_support_radius(t0, n)
        for _ in range(50):
            xi = rng.uniform(-r0, r0, size=n) / np.sqrt(n)
            lhs = zkb_profile(t0, xi, n)
            rhs = zkb_profile(t1, xi * (t1 / t0) ** beta, n) * (t1 / t0) ** alpha
            assert np.isclose(lhs, rhs, rtol=1e-12, atol=1e-14)


def test_zkb_moments_match_quadrature():
    t = 0.25
    r = zkb_support_radius(t)
    mass = quad(lambda x: float(zkb_profile(t, x, 1)), -r, r)[0]
    var = quad(lambda x: x * x * float(zkb_profile(t, x, 1)), -r, r)[0] / mass
    assert np.isclose(zkb_gaussian(t).cov[0, 0], var, rtol=1e-10)


# simple wave


def test_simple_wave_t0_exact():
    p = paper_simple_wave()
    x = np.linspace(-3, 3, 101)
    u, a = simple_wave_solution(p, 0.0, x)
    assert np.array_equal(a, p.a0(x))
    assert np.array_equal(u, p.u0(x))


def test_simple_wave_foot_consistency():
    p = paper_simple_wave()
    x = np.linspace(-3, 8, 501)
    for t in (0.05, 0.4):
        xi = _foot(p, t, x)
        assert np.max(np.abs(characteristic(p, t, xi) - x)) <= 1e-10
        oracle = np.array([brentq(lambda z: z + p.speed(z) * t - xv, xv - 20, xv + 1, xtol=1e-14) for xv in x])
        assert np.max(np.abs(xi - oracle)) <= 1e-10
        u, _ = simple_wave_solution(p, t, x)
        assert np.max(np.abs(u - p.u0(oracle))) <= 1e-9


def test_simple_wave_constant_translation():
    p = SimpleWaveProblem(lambda x: np.full_like(np.asarray(x, float), 1.5))
    x = np.linspace(-1, 1, 11)
    u, a = simple_wave_solution(p, 2.0, x)
    assert np.allclose(a, 1.5) and np.allclose(u, 5 * 1.5 - 1)


def test_simple_wave_sign_convention():
    p = paper_simple_wave()
    u, a = simple_wave_solution(p, 0.0, np.array([-5.0, 5.0]))
    # R- = k a - u = c
    assert np.allclose(5 * a - u, 1.0)


def test_simple_wave_total_variation_invariant():
    p = paper_simple_wave()
    x = np.linspace(-6, 12, 200001)
    tv = []
    for t in (0.0, 0.05, 0.4):
        u, _ = simple_wave_solution(p, t, x)
        tv.append(np.sum(np.abs(np.diff(u))))
    assert max(tv) - min(tv) <= 1e-4


def test_simple_wave_crossing():
    p = SimpleWaveProblem(lambda x: 2.0 - np.tanh(np.asarray(x, float)))
    assert np.isfinite(p.breaking_time)
    with pytest.raises(CharacteristicsCrossed):
        simple_wave_solution(p, 2 * p.breaking_time, np.zeros(3))
    simple_wave_solution(p, 0.5 * p.breaking_time, np.zeros(3))


# Sod


def pressure_function_oracle(st):
    g = st.gamma

    def f(p, rho, pk):
        a = math.sqrt(g * pk / rho)
        if p > pk:
            A, B = 2 / ((g + 1) * rho), (g - 1) / (g + 1) * pk
            return (p - pk) * math.sqrt(A / (p + B))
        return 2 * a / (g - 1) * ((p / pk) ** ((g - 1) / (2 * g)) - 1)

    def total(p):
        return f(p, st.rho_l, st.p_l) + f(p, st.rho_r, st.p_r) + st.u_r - st.u_l

    p = brentq(total, 1e-12, 1e4, xtol=1e-300, rtol=1e-15)
    u = 0.5 * (st.u_l + st.u_r) + 0.5 * (f(p, st.rho_r, st.p_r) - f(p, st.rho_l, st.p_l))
    return p, u


def test_sod_star_state_pinned_and_oracle():
    p, u = star_state(sod_state())
    assert math.isclose(p, SOD_P_STAR, rel_tol=1e-14)
    assert math.isclose(u, SOD_U_STAR, rel_tol=1e-14)
    po, uo = pressure_function_oracle(sod_state())
    assert math.isclose(p, po, rel_tol=1e-12) and math.isclose(u, uo, rel_tol=1e-12)


@pytest.mark.parametrize(
    "state",
    [
        RiemannState(1.0, 0.0, 1000.0, 1.0, 0.0, 0.01),
        RiemannState(1.0, -2.0, 0.4, 1.0, 2.0, 0.4),
        RiemannState(5.99924, 19.5975, 460.894, 5.99242, -6.19633, 46.095),
        RiemannState(1.0, 0.0, 0.01, 1.0, 0.0, 100.0),
    ],
)
def test_star_state_against_oracle(state):
    p, u = star_state(state)
    po, uo = pressure_function_oracle(state)
    assert math.isclose(p, po, rel_tol=1e-10)
    assert math.isclose(u, uo, rel_tol=1e-10, abs_tol=1e-12)


def rh_residuals(st, w):
    g = st.gamma
    sh = w["r"]["head"]
    rho_r, u_r, p_r = st.rho_r, st.u_r, st.p_r
    rho_s, u_s, p_s = w["r"]["rho_star"], w["u_star"], w["p_star"]

    def flux(rho, u, p):
        e = p / (g - 1) + 0.5 * rho * u * u
        return np.array([rho * u, rho * u * u + p, u * (e + p)]), np.array([rho, rho * u, e])

    f_r, q_r = flux(rho_r, u_r, p_r)
    f_s, q_s = flux(rho_s, u_s, p_s)
    return (f_s - f_r) - sh * (q_s - q_r)


def test_sod_rankine_hugoniot_and_entropy():
    st = sod_state()
    w = wave_speeds(st)
    assert w["r"]["type"] == "shock" and w["l"]["type"] == "rarefaction"
    assert np.max(np.abs(rh_residuals(st, w))) <= 1e-10
    # entropy: shock compresses, rarefaction expands, Lax condition on the shock
    assert st.p_r < w["p_star"] < st.p_l
    a_s = math.sqrt(st.gamma * w["p_star"] / w["r"]["rho_star"])
    assert st.u_r + st.a_r < w["r"]["head"] < w["u_star"] + a_s
    assert w["l"]["head"] < w["l"]["tail"] < w["contact"] < w["r"]["head"]


def test_sod_identical_states():
    st = RiemannState(1.0, 0.3, 2.0, 1.0, 0.3, 2.0)
    rho, u, p = sod_exact(st, 0.2, np.linspace(-1, 1, 51))
    assert np.allclose(rho, 1.0) and np.allclose(u, 0.3) and np.allclose(p, 2.0)


def test_sod_vacuum():
    with pytest.raises(VacuumError):
        star_state(RiemannState(1.0, -10.0, 1.0, 1.0, 10.0, 1.0))


def test_sod_self_similarity(rng):
    st = sod_state()
    eta = rng.uniform(-2, 2, 2000)
    ref = sod_exact(st, 1.0, eta)
    for t in (0.1, 0.25, 0.7):
        out = sod_exact(st, t, eta * t)
        for a, b in zip(out, ref):
            assert np.max(np.abs(a - b)) <= 1e-12


def test_sod_invalid_time():
    with pytest.raises(InvalidTime):
        sod_exact(sod_state(), 0.0, [0.0])


# wedge


def oracle_shock_angle(m, delta, g=1.4):
    def defl(th):
        ms2 = (m * math.sin(th)) ** 2
        return math.atan(2 / math.tan(th) * (ms2 - 1) / (m * m * (g + math.cos(2 * th)) + 2))

    mu = math.asin(1 / m)
    th = np.linspace(mu + 1e-9, math.pi / 2 - 1e-9, 20001)
    th_max = th[int(np.argmax([defl(v) for v in th]))]
    lo, hi = mu + 1e-9, th_max
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if defl(mid) < delta:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@pytest.mark.parametrize(
    "mach,deg,theta_deg,mach_d",
    [(5.0, 28.275, 39.99999381, 2.281632145443518), (8.0, 22.80, 29.99764810, 3.471608022865532)],
)
def test_wedge_shock_angle(mach, deg, theta_deg, mach_d):
    p = WedgeProblem.from_degrees(mach, deg)
    theta, md = wedge_shock_angle(p)
    assert abs(theta - oracle_shock_angle(mach, math.radians(deg))) <= 1e-9
    assert abs(math.degrees(theta) - theta_deg) <= 1e-7
    assert math.isclose(md, mach_d, rel_tol=1e-12)
    r1, r2 = shock_relation_residuals(p, theta, md)
    assert abs(r1) <= 1e-12 and abs(r2) <= 1e-12


def test_wedge_small_angle_limit():
    for m in (2.0, 5.0):
        theta, _ = wedge_shock_angle(WedgeProblem(m, 1e-7))
        assert abs(theta - math.asin(1 / m)) <= 1e-4
        assert wedge_shock_angle(WedgeProblem(m, 0.0))[0] == math.asin(1 / m)


def test_wedge_detached():
    with pytest.raises(DetachedShock):
        wedge_shock_angle(WedgeProblem.from_degrees(2.0, 30.0))


def test_wedge_mach_field_points():
    p = WedgeProblem.from_degrees(5.0, 28.275)
    theta, md = wedge_shock_angle(p)
    f = wedge_mach_field(p)
    pts = np.array([[-0.2, 0.0], [0.5, 5.0], [0.5, 0.5 * math.tan(theta) - 1e-6]])
    assert np.allclose(f(pts)[:, 0], [5.0, 5.0, md])


def test_wedge_geometry_maps(rng):
    x = np.column_stack([rng.uniform(-0.5, 1.0, 500), rng.uniform(0.0, 1.0, 500)])
    assert np.array_equal(wedge_lambda(x, 0.0), x)
    for d in (0.3, 0.49):
        assert np.max(np.abs(wedge_theta(wedge_lambda(x, d), d) - x)) <= 1e-12
        assert np.max(np.abs(wedge_phi(x, d, d) - x)) <= 1e-12
    # the wall of one wedge goes to the wall of the other
    d0, d1 = 0.3, 0.45
    x1 = np.linspace(0, 1, 11)
    wall = np.column_stack([x1, x1 * math.tan(d0)])
    assert np.allclose(wedge_phi(wall, d1, d0)[:, 1], x1 * math.tan(d1), atol=1e-14)
    lam, th, phi = wedge_geometry_maps(d1, d0)
    assert np.array_equal(phi(x), wedge_phi(x, d1, d0))
    # continuity across x1 = 0
    eps = 1e-12
    assert np.allclose(lam([[-eps, 0.4]]), lam([[eps, 0.4]]), atol=1e-10)


def test_wedge_map_singular():
    with pytest.raises(MapSingular):
        wedge_lambda([[2.0, 0.0]], math.radians(60))
