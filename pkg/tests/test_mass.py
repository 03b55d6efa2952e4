"""Mass aspect extraction, gauge shift law and the Wang inequality."""

import json
import math

import numpy as np
import pytest

from ahcorner.mass import (MassAspect, NotAsymptoticallyHyperbolic, extract_mass_aspect,
                           gauge_shift_law, geodesic_gauge, w_expansion_check,
                           wang_inequality)
from ahcorner.warped import (WarpedMetric, conformal_reparametrize, make_ads_schwarzschild,
                             make_hyperbolic)

S_HI = 22.0


def _ads(n, m, num=20001):
    return make_ads_schwarzschild(n, m, 1.0, S_HI, num=num)


def _sech_power(g):
    """Manufactured ``v = sech^n s`` (leading coefficient 2^n in ``e^{-ns}``) and derivatives."""
    n, s = g.n, g.s
    sech, th = 1.0 / np.cosh(s), np.tanh(s)
    v = sech**n
    return v, -n * v * th, v * (n * n * th**2 - n * sech**2)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_hyperbolic_gauge_is_exact(n):
    g = make_hyperbolic(n, S_HI, num=4001)
    gauge = geodesic_gauge(g)
    assert gauge.K == pytest.approx(0.0, abs=1e-12)
    far = g.s > 0.5
    assert np.allclose(np.sinh(gauge.rho[far]), 1.0 / np.sinh(g.s[far]), rtol=1e-12)
    assert np.allclose(gauge.rho_at(g.s[far]), gauge.rho[far], rtol=1e-13)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_hyperbolic_mass_aspect_vanishes(n):
    g = make_hyperbolic(n, S_HI, num=20001)
    h = extract_mass_aspect(geodesic_gauge(g), g)
    assert abs(h.h_scalar) <= 1e-8


@pytest.mark.parametrize("n", [3, 4, 5])
def test_ads_roundness_at_infinity(n):
    g = _ads(n, 0.1)
    gauge = geodesic_gauge(g)
    use = np.isfinite(gauge.rho) & (gauge.rho < 0.5) & (gauge.rho > 0.02)
    dev = (np.sinh(gauge.rho[use]) * g.W[use] - 1.0) / gauge.rho[use] ** n
    # 1 + O(rho^n) with leading coefficient m/n
    assert np.max(np.abs(dev)) < 0.1
    assert dev[-1] == pytest.approx(0.1 / n, rel=1e-3)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_ads_mass_aspect_is_twice_mass(n):
    # Oracle: ds/dr = (1 + r^2 - 2m r^{2-n})^{-1/2} gives s - K = asinh r - m r^{-n}/n + ...,
    # so sinh^2(rho) W^2 - 1 = (2m/n) rho^n + ... and h = n * (2m/n) = 2m.
    values = []
    for m in (0.05, 0.1, 0.2):
        g = _ads(n, m)
        values.append(extract_mass_aspect(geodesic_gauge(g), g).h_scalar)
        assert values[-1] == pytest.approx(2.0 * m, rel=1e-6)
    ratios = np.array(values) / np.array([0.05, 0.1, 0.2])
    assert np.ptp(ratios) <= 1e-6 * ratios[0]


def test_calibration_invariance():
    g = _ads(3, 0.1)
    h = [extract_mass_aspect(geodesic_gauge(g, s_cal=sc), g).h_scalar
         for sc in (12.0, 16.0, 20.0, None)]
    assert np.ptp(h) <= 1e-8


def test_rejects_non_hyperbolic_end():
    s = np.linspace(0.1, S_HI, 4001)
    # sectional curvature -4 at infinity: no geodesic defining function for the unit model
    steep = WarpedMetric.from_samples(3, s, 0.5 * np.sinh(2.0 * s))
    with pytest.raises(NotAsymptoticallyHyperbolic):
        geodesic_gauge(steep)


def test_shift_law_identity_and_value():
    h = MassAspect.from_scalar(3, 0.37)
    assert gauge_shift_law(0.0, h) == h
    assert gauge_shift_law(1.0, MassAspect.from_scalar(3, 0.0)).h_scalar == 16.0
    assert gauge_shift_law(1.0, MassAspect.from_scalar(5, 0.0)).h_scalar == 8.0


@pytest.mark.parametrize("n", [3, 4, 5])
def test_shift_law_matches_direct_extraction(n):
    # v = sech^n has A = 1 in the rho expansion, so the two paths differ by 4(n+1)/(n-2)
    g = make_hyperbolic(n, S_HI, num=20001)
    v, dv, ddv = _sech_power(g)
    deformed = conformal_reparametrize(g, 1.0 + v, dv, ddv)
    direct = extract_mass_aspect(geodesic_gauge(deformed), deformed).h_scalar
    predicted = gauge_shift_law(1.0, extract_mass_aspect(geodesic_gauge(g), g)).h_scalar
    assert direct == pytest.approx(predicted, rel=1e-4)


def test_zero_deformation_keeps_mass_aspect():
    g = _ads(3, 0.1)
    z = np.zeros_like(g.s)
    deformed = conformal_reparametrize(g, 1.0 + z, z, z)
    h0 = extract_mass_aspect(geodesic_gauge(g), g).h_scalar
    h1 = extract_mass_aspect(geodesic_gauge(deformed), deformed).h_scalar
    assert h1 == pytest.approx(h0, abs=1e-10)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_w_expansion_coefficient(n):
    g = make_hyperbolic(n, S_HI, num=20001)
    v, _, _ = _sech_power(g)
    rep = w_expansion_check(v, geodesic_gauge(g), 1.0)
    assert rep["expected"] == pytest.approx(2.0 / (n * (n - 2)))
    assert rep["ok"] and rep["rel_error"] <= 1e-3


def test_w_expansion_synthetic_power():
    n, A = 3, 0.4
    gauge = geodesic_gauge(make_hyperbolic(n, S_HI, num=20001))
    v = np.where(np.isfinite(gauge.rho), A * np.nan_to_num(gauge.rho) ** n, 0.0)
    rep = w_expansion_check(v, gauge, A)
    assert rep["coefficient"] == pytest.approx(2.0 * A / (n * (n - 2)), rel=1e-3)


def test_w_expansion_trivial():
    gauge = geodesic_gauge(make_hyperbolic(3, S_HI, num=2001))
    rep = w_expansion_check(np.zeros_like(gauge.s), gauge, 0.0)
    assert rep["ok"] and rep["coefficient"] == 0.0


def test_wang_inequality_cases():
    lhs, rhs, ok = wang_inequality(MassAspect.from_scalar(3, 0.0))
    assert lhs == rhs == 0.0 and ok
    lhs, rhs, ok = wang_inequality(MassAspect.from_scalar(3, 0.2))
    assert lhs == pytest.approx(2 * 0.2 * 4 * math.pi) and rhs == 0.0 and ok
    assert not wang_inequality(MassAspect.from_scalar(3, -0.01))[2]


def test_mass_aspect_json():
    h = MassAspect.from_scalar(4, 0.3)
    data = json.loads(h.to_json())
    assert set(data) == {"h_scalar", "trace_integral", "moment", "ok"}
    assert data["moment"] == [0.0] * 4 and data["ok"] is True
    assert data["trace_integral"] == pytest.approx(3 * 0.3 * 2 * math.pi**2)
