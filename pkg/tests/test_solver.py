import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ahcorner.corner import f_source, make_corner, smooth
from ahcorner.green import green0, kernel_table
from ahcorner.mass import geodesic_gauge
from ahcorner.solver import (DecaySpec, SolverError, SolverInput, certify_deformation,
                             check_positivity, deformation_gap, dump_solution_csv,
                             extract_decay, second_derivative, solve, weighted_norm)
from ahcorner.warped import WarpedMetric, make_ads_schwarzschild, make_hyperbolic


def _manufactured(n, points, s_hi=22.0):
    g = make_hyperbolic(n, s_hi, num=points)
    sech = 1.0 / np.cosh(g.s)
    # v* = sech^n s solves -Δv + n v = n(n+1) sech^{n+2} s and v* ~ rho^n
    return g, sech**n, n * (n + 1) * sech ** (n + 2)


def _bump(s, lo, hi):
    return np.where((s > lo) & (s < hi), np.sin(math.pi * (s - lo) / (hi - lo)) ** 4, 0.0)


def test_zero_data_gives_zero_solution():
    g = make_hyperbolic(3, 15.0, num=2001)
    res = solve(SolverInput(g, np.zeros_like(g.s), np.zeros_like(g.s)))
    assert not np.any(res.v)
    assert not res.positive


def test_manufactured_solution_second_order():
    errors = []
    sizes = (10001, 20001, 40001)
    for m in sizes:
        g, v_star, w = _manufactured(3, m)
        res = solve(SolverInput(g, np.zeros_like(g.s), w))
        errors.append(np.max(np.abs(res.v - v_star)))
    orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all(np.abs(orders - 2.0) <= 0.1)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_manufactured_solution_recovered(n):
    g, v_star, w = _manufactured(n, 120001)
    res = solve(SolverInput(g, np.zeros_like(g.s), w))
    assert np.max(np.abs(res.v - v_star)) <= 1e-7
    assert res.m_matrix and res.residual_norm <= 1e-12
    assert res.A == pytest.approx(1.0, rel=1e-3)
    assert res.fit_order == pytest.approx(n, rel=1e-3)


def test_exterior_solution_is_kernel_multiple():
    n = 3
    g = make_hyperbolic(n, 22.0, num=80001)
    res = solve(SolverInput(g, np.zeros_like(g.s), _bump(g.s, 1.0, 2.0)))
    t = kernel_table(n)
    ext = (g.s > 2.05) & (g.s < 18.0)
    ratio = res.v[ext] / green0(t, g.s[ext])
    assert np.ptp(ratio) / np.mean(ratio) <= 1e-6
    # the decay coefficient of the kernel profile is c_n/θ̃(1)
    assert res.A / np.mean(ratio) == pytest.approx(t.limit_constant, rel=1e-6)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_decay_of_kernel_profile(n):
    g = make_hyperbolic(n, 22.0, num=4001)
    t = kernel_table(n)
    v = np.concatenate([[0.0], green0(t, g.s[1:])])
    A, order = extract_decay(v, geodesic_gauge(g))
    assert A == pytest.approx(t.limit_constant, rel=1e-6)
    assert order == pytest.approx(n, rel=1e-4)


def test_slow_forcing_flagged():
    n = 3
    g = make_hyperbolic(n, 22.0, num=20001)
    slow = solve(SolverInput(g, np.zeros_like(g.s), np.cosh(g.s) ** -2.5,
                             DecaySpec(kappa=3.0, eta=2.5, delta=2.9)))
    assert slow.fit_order < n - 0.4
    assert not slow.info["order_ok"] and not slow.info["compliant"]
    fast = solve(SolverInput(g, np.zeros_like(g.s), np.cosh(g.s) ** -4.5,
                             DecaySpec(kappa=3.0, eta=4.5, delta=2.9)))
    assert fast.info["order_ok"] and fast.info["compliant"]


def test_decay_spec_compliance():
    assert DecaySpec(2.5, 4.5, 2.9).compliant(3)
    assert not DecaySpec(2.0, 4.5, 2.9).compliant(3)
    assert not DecaySpec(3.0, 4.0, 2.9).compliant(3)


def test_linearity():
    g = make_hyperbolic(4, 18.0, num=4001)
    w = _bump(g.s, 0.5, 1.5)
    f = -0.2 * _bump(g.s, 0.2, 0.9)
    a = solve(SolverInput(g, f, w))
    b = solve(SolverInput(g, f, 2.0 * w))
    np.testing.assert_allclose(b.v, 2.0 * a.v, rtol=1e-12, atol=0)
    assert b.A == pytest.approx(2.0 * a.A, rel=1e-10)


def test_sign_flipped_source_gives_negative_solution():
    g = make_hyperbolic(3, 18.0, num=4001)
    res = solve(SolverInput(g, np.zeros_like(g.s), -_bump(g.s, 1.0, 2.0)))
    assert np.any(res.v < 0) and not res.positive and not check_positivity(res)


def test_requires_regular_center():
    g = make_ads_schwarzschild(3, 0.1, 1.0, 15.0)
    with pytest.raises(SolverError):
        solve(SolverInput(g, np.zeros_like(g.s), np.zeros_like(g.s)))


def test_input_shape_checked():
    g = make_hyperbolic(3, 15.0, num=101)
    with pytest.raises(ValueError):
        SolverInput(g, np.zeros(5), np.zeros(101))


def test_weighted_norms():
    n = 3
    g = make_hyperbolic(n, 20.0, num=8001)
    gauge = geodesic_gauge(g)
    rho = np.where(np.isfinite(gauge.rho), gauge.rho, 0.0)
    u = np.where(g.s > 1.0, rho**2.5, 0.0)
    assert weighted_norm(u, g, 2.5, 0, gauge) == pytest.approx(1.0, rel=1e-12)
    tails = []
    for s_hi in (10.0, 15.0, 20.0):
        sub = make_hyperbolic(n, s_hi, num=int(s_hi * 400) + 1)
        sg = geodesic_gauge(sub)
        r = np.where(sub.s > 5.0, sg.rho, 0.0)
        tails.append(weighted_norm(r**3.5, sub, 2.5, 0, sg))
    # rho^{delta+1} has weighted size rho(5), independent of the far end
    assert max(tails) <= 2.1 * math.exp(-5.0)
    t = kernel_table(n)
    sizes = {}
    for s_hi in (10.0, 20.0):
        sub = make_hyperbolic(n, s_hi, num=int(s_hi * 200) + 1)
        sg = geodesic_gauge(sub)
        v = np.concatenate([[0.0], green0(t, sub.s[1:])])
        prof = np.where(sub.s > 1.0, v, 0.0)
        sizes[s_hi] = (weighted_norm(prof, sub, n, 0, sg),
                       weighted_norm(prof, sub, n + 0.5, 0, sg))
    assert sizes[20.0][0] == pytest.approx(sizes[10.0][0], rel=1e-3)
    assert sizes[20.0][1] > 50 * sizes[10.0][1]


def test_deformation_gap_examples():
    assert deformation_gap(0.0, 3) == 0.0
    assert deformation_gap(1.0, 4) == pytest.approx(2.0, rel=1e-15)
    with pytest.raises(ValueError):
        deformation_gap(-0.1, 3)


def test_deformation_gap_dense_sweep():
    v = np.linspace(0.0, 10.0, 10_000)
    for n in range(3, 9):
        assert np.all(deformation_gap(v, n) >= 0.0)


@settings(max_examples=300, deadline=None)
@given(st.floats(min_value=0.0, max_value=1e6), st.integers(min_value=3, max_value=12))
def test_deformation_gap_nonnegative(v, n):
    assert deformation_gap(v, n) >= 0.0


def test_certify_trivial_and_corrupted():
    g = make_hyperbolic(3, 22.0, num=20001)
    zero = solve(SolverInput(g, np.zeros_like(g.s), np.zeros_like(g.s)))
    assert abs(certify_deformation(g, zero).margin) <= 1e-8
    res = solve(SolverInput(g, np.zeros_like(g.s), 5.0 * _bump(g.s, 1.0, 2.0)))
    assert certify_deformation(g, res).ok
    bad = certify_deformation(g, res, sign=-1.0)
    assert not bad.ok and bad.margin < -1.0


def test_certify_smoothed_corner():
    s0 = math.asinh(1.0)
    s = np.linspace(0.0, s0, 401)
    inside = WarpedMetric.from_profile(3, s, lambda x: (np.sinh(x), np.cosh(x), np.sinh(x)),
                                       center_regular=True)
    outside = make_ads_schwarzschild(3, 0.1, 1.0, 20.0, s_lo=s0, num=4001)
    sm = smooth(make_corner(inside, outside, s0), 0.1, h_far=0.0025)
    f = f_source(sm.base)
    res = solve(SolverInput(sm.base, f, -f))
    assert res.positive
    assert certify_deformation(sm.base, res).margin >= -1e-6


def test_second_derivative_consistent_with_differences():
    g, v_star, w = _manufactured(3, 20001)
    res = solve(SolverInput(g, np.zeros_like(g.s), w))
    exact = 3 * v_star * (3 * np.tanh(g.s) ** 2 - 1 / np.cosh(g.s) ** 2)
    err = np.abs(second_derivative(res) - exact)
    # v' enters through (n-1) coth(s) v', so the error peaks next to the center
    assert np.max(err) <= 2e-5
    assert np.max(err[g.s > 1.0]) <= 2e-6


def test_solution_csv(tmp_path):
    g, _, w = _manufactured(3, 2001, s_hi=15.0)
    res = solve(SolverInput(g, np.zeros_like(g.s), w))
    path = tmp_path / "v.csv"
    dump_solution_csv(res, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "s,v,residual,rho" and len(lines) == 2002


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(min_value=0.0, max_value=5.0), min_size=4, max_size=4),
       st.integers(min_value=3, max_value=5), st.floats(min_value=1.0, max_value=1.2))
def test_operator_is_m_matrix(f_amp, n, stretch):
    # graded grid, non-negative f: the discrete operator stays an M-matrix
    x = np.linspace(0.0, 1.0, 801)
    s = 16.0 * (x + (stretch - 1.0) * x**2) / stretch
    g = WarpedMetric.from_profile(n, s, lambda t: (np.sinh(t), np.cosh(t), np.sinh(t)),
                                  center_regular=True)
    f = sum(a * _bump(s, k, k + 1.0) for k, a in enumerate(f_amp))
    res = solve(SolverInput(g, f, _bump(s, 0.5, 1.5)), fit=False)
    assert res.m_matrix
    assert np.all(res.v >= 0.0)
