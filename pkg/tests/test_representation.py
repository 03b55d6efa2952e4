"""Integral representation of the decay coefficient."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from ahcorner.green import kernel_table, sphere_volume
from ahcorner.mass import geodesic_gauge
from ahcorner.representation import (DivergentSourceError, RepresentationConfig,
                                     chart_arclength, chart_radius, coeff_A0, coeff_A1,
                                     coeff_A2, cross_check, kernel, kernel_sphere_integral,
                                     normal_kernel_sphere_integral, osculating_matrix,
                                     relative_residual, represent)
from ahcorner.solver import SolverInput, solve
from ahcorner.warped import make_ads_schwarzschild, make_hyperbolic

S_HI = 22.0


def _bump(s, lo, hi):
    inside = (s > lo) & (s < hi)
    return np.where(inside, np.sin(math.pi * (s - lo) / (hi - lo)) ** 4, 0.0)


def _sphere_dblquad(fn, R):
    """Brute-force ``∫_{|y|=R} fn dσ_0`` in n = 3 with adaptive quadrature."""
    def integrand(phi, theta):
        y = R * np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi),
                          math.cos(theta)])
        return fn(y) * math.sin(theta)
    val, _ = integrate.dblquad(integrand, 0.0, math.pi, 0.0, 2 * math.pi,
                               epsabs=0.0, epsrel=1e-11)
    return val


@pytest.fixture(scope="module")
def hyperbolic_solution():
    n = 3
    g = make_hyperbolic(n, S_HI, num=44001)
    w = _bump(g.s, 3.0, 4.0)
    return g, w, solve(SolverInput(g, np.zeros_like(g.s), w))


def test_chart_radius_round_trip():
    gauge = geodesic_gauge(make_hyperbolic(3, S_HI, num=2001))
    for r in (0.5, 2.0, 40.0):
        assert chart_radius(gauge, chart_arclength(gauge, r)) == pytest.approx(r, rel=1e-10)
    # on hyperbolic space |y| = sinh s
    assert chart_arclength(gauge, math.sinh(2.0)) == pytest.approx(2.0, rel=1e-13)


@pytest.mark.parametrize("n", [3, 4])
def test_osculating_matrix_hyperbolic_is_identity(n):
    g = make_hyperbolic(n, S_HI, num=4001)
    rng = np.random.default_rng(0)
    for _ in range(5):
        y = rng.normal(size=n)
        y *= rng.uniform(0.5, 50.0) / np.linalg.norm(y)
        assert np.allclose(osculating_matrix(y, g), np.eye(n), atol=1e-9)


def test_osculating_matrix_ads_decay():
    n = 3
    g = make_ads_schwarzschild(n, 0.1, 1.0, S_HI, num=20001)
    gauge = geodesic_gauge(g)
    scaled = []
    for r in (5.0, 10.0, 20.0, 50.0):
        y = r * np.array([0.6, 0.0, 0.8])
        A = osculating_matrix(y, g, gauge)
        # 1 - y.g.y = 1/(1 + r^2) is formed by cancellation
        assert y @ A @ y == pytest.approx(r * r, rel=1e-8)
        scaled.append(np.linalg.norm(A - np.eye(n), 2) * r**n)
    assert max(scaled) < 1.0
    assert np.ptp(scaled) < 0.05 * max(scaled)


def test_osculating_matrix_rejects_origin_and_far_points():
    g = make_hyperbolic(3, 10.0, num=2001)
    with pytest.raises(ValueError):
        osculating_matrix(np.zeros(3), g)
    with pytest.raises(ValueError):
        osculating_matrix(np.array([1e6, 0.0, 0.0]), g)


def test_kernel_axis_values():
    omega = np.array([0.0, 1.0, 0.0])
    for R in (10.0, 1e3, 1e6):
        t = math.sqrt(1 + R * R)
        assert kernel(omega, R * omega) == pytest.approx((t + R) ** 3, rel=1e-12)
        assert kernel(omega, -R * omega) == pytest.approx((t + R) ** -3, rel=1e-12)
    assert kernel(omega, 1e3 * omega) == pytest.approx(2e3**3, rel=1e-6)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_kernel_sphere_integral_exact(n):
    omega = np.ones(n) / math.sqrt(n)
    for R in (0.3, 3.0, 300.0, 3e4):
        exact = sphere_volume(n) * math.sqrt(1 + R * R)
        assert kernel_sphere_integral(omega, R) == pytest.approx(exact, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3).filter(
           lambda v: np.linalg.norm(v) > 1e-3),
       st.floats(0.05, 1e4))
def test_kernel_sphere_integral_property(direction, R):
    omega = np.asarray(direction) / np.linalg.norm(direction)
    exact = 4 * math.pi * math.sqrt(1 + R * R)
    assert kernel_sphere_integral(omega, R) == pytest.approx(exact, rel=1e-9)


@pytest.mark.parametrize("R", [0.5, 2.0, 6.0])
def test_sphere_integrals_match_brute_force(R):
    omega = np.array([0.48, -0.6, 0.64])
    t = math.sqrt(1 + R * R)

    def normal(y):
        d = t - omega @ y
        return d ** -3 * (R - (omega @ y) / R * t) / d

    ref_k = _sphere_dblquad(lambda y: kernel(omega, y), R)
    ref_n = _sphere_dblquad(normal, R)
    assert kernel_sphere_integral(omega, R) == pytest.approx(ref_k, rel=1e-9)
    assert normal_kernel_sphere_integral(omega, R) == pytest.approx(ref_n, rel=1e-8)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_boundary_coefficients_closed_form(n):
    g = make_hyperbolic(n, S_HI, num=4001)
    cfg = RepresentationConfig(math.sinh(2.0), (1.0,) + (0.0,) * (n - 1))
    C = kernel_table(n).limit_constant
    W = math.sinh(2.0)
    # ∫k dσ_0 = vol(S^{n-1}) t exactly
    A1 = coeff_A1(0.7, g, cfg)
    assert A1 == pytest.approx(-C * 0.7 * W ** (n - 1) * sphere_volume(n) * math.cosh(2.0),
                               rel=1e-12)
    assert coeff_A1(1.4, g, cfg) == pytest.approx(2 * A1, rel=1e-14)
    A2 = coeff_A2(1.0, g, cfg)
    assert coeff_A2(-3.0, g, cfg) == pytest.approx(-3 * A2, rel=1e-14)


def test_A2_matches_brute_force():
    g = make_hyperbolic(3, S_HI, num=4001)
    R = 2.0
    omega = np.array([0.0, 0.0, 1.0])
    cfg = RepresentationConfig(R, tuple(omega))
    t = math.sqrt(1 + R * R)

    def normal(y):
        d = t - omega @ y
        return d ** -3 * (R - (omega @ y) / R * t) / d

    C = kernel_table(3).limit_constant
    expected = -3 * C * R**2 * _sphere_dblquad(normal, R)
    assert coeff_A2(1.0, g, cfg) == pytest.approx(expected, rel=1e-8)


@pytest.mark.parametrize("n", [3, 4])
def test_A0_matches_radial_quad(n):
    g = make_hyperbolic(n, S_HI, num=4001)
    cfg = RepresentationConfig(math.sinh(1.5), (1.0,) + (0.0,) * (n - 1))
    src = lambda s: _bump(np.asarray(s, dtype=float), 2.0, 3.0)
    C = kernel_table(n).limit_constant
    # hyperbolic shells: W = sinh s, |y| = sinh s, ∫k dσ_0 = vol cosh s
    oracle, _ = integrate.quad(
        lambda s: float(src(s)) * math.sinh(s) ** (n - 1) * sphere_volume(n) * math.cosh(s),
        2.0, 3.0, epsabs=0.0, epsrel=1e-12, limit=200)
    assert coeff_A0(src, g, cfg) == pytest.approx(C * oracle, rel=1e-7)
    samples = src(g.s)
    assert coeff_A0(samples, g, cfg) == pytest.approx(C * oracle, rel=1e-5)


def test_A0_linear_in_source():
    g = make_hyperbolic(3, S_HI, num=4001)
    cfg = RepresentationConfig(2.0, (0.0, 1.0, 0.0))
    a = lambda s: _bump(np.asarray(s), 2.0, 3.0)
    b = lambda s: _bump(np.asarray(s), 2.5, 4.0)
    both = coeff_A0(lambda s: 2 * a(s) - b(s), g, cfg)
    assert both == pytest.approx(2 * coeff_A0(a, g, cfg) - coeff_A0(b, g, cfg), rel=1e-12)


def test_A0_rejects_slow_source():
    n = 3
    g = make_hyperbolic(n, S_HI, num=4001)
    gauge = geodesic_gauge(g)
    cfg = RepresentationConfig(2.0, (1.0, 0.0, 0.0))
    with pytest.raises(DivergentSourceError):
        coeff_A0(lambda s: gauge.rho_at(s) ** (n - 0.5), g, cfg, gauge)
    # rho^{n+1} decays: accepted
    coeff_A0(lambda s: gauge.rho_at(s) ** (n + 1), g, cfg, gauge)


@pytest.mark.parametrize("r0", [math.sinh(2.5), math.sinh(4.5)])
def test_exact_on_hyperbolic_space(hyperbolic_solution, r0):
    # the bump [3, 4] lies outside sinh 2.5 and inside sinh 4.5
    g, w, res = hyperbolic_solution
    cfg = RepresentationConfig(r0, (1.0, 0.0, 0.0))
    bundle = represent(res.v, res.dv, w, g, cfg, res.A, gauge=res.gauge)
    assert relative_residual(bundle) <= 1e-5
    if r0 > math.sinh(4.0):
        assert bundle.A0 == 0.0


def test_direction_independence(hyperbolic_solution):
    g, w, res = hyperbolic_solution
    totals = []
    for omega in [(1.0, 0.0, 0.0), (0.0, 0.0, -1.0), (1.0, 2.0, -2.0)]:
        cfg = RepresentationConfig(math.sinh(2.5), omega)
        b = represent(res.v, res.dv, w, g, cfg, res.A, gauge=res.gauge)
        totals.append(b.A0 + b.A1 + b.A2)
    assert np.ptp(totals) <= 1e-12 * abs(totals[0])


def test_bundle_and_json():
    b = cross_check(1.0, 0.25, 0.5, 0.2)
    assert b.A_minus1_residual == pytest.approx(0.05)
    cfg = RepresentationConfig(3.0, (0.0, 2.0, 0.0))
    assert cfg.direction == (0.0, 1.0, 0.0)
    data = json.loads(b.to_json(cfg))
    assert set(data) == {"A0", "A1", "A2", "A_fit", "residual", "r0", "omega"}
    with pytest.raises(ValueError):
        RepresentationConfig(-1.0, (1.0, 0.0, 0.0))
    with pytest.raises(ValueError):
        RepresentationConfig(1.0, (0.0, 0.0, 0.0))
