"""Geodesic defining functions and the mass aspect of rotationally symmetric metrics.

In arclength gauge the geodesic defining function solves
``drho/ds = -sinh(rho)``, so ``tanh(rho/2) = exp(-(s - K))`` for a single
constant ``K``.  ``K`` is fixed by requiring ``sinh(rho) W -> 1`` at a
calibration point far out, where ``W = sinh(s - K)`` up to ``O(e^{-ns})``.
The metric then reads ``sinh^{-2} rho (drho^2 + sinh^2(rho) W^2 g_0)`` and

    sinh^2(rho) W^2 = 1 + (h/n) rho^n + O(rho^{n+1}),

with ``h = h_scalar g_0``.  For AdS-Schwarzschild of mass ``m``, ``h = 2m``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .green import sphere_volume
from .warped import WarpedMetric


class NotAsymptoticallyHyperbolic(ValueError):
    """``sinh(rho) W`` does not settle to 1 near the end of the domain."""


class FitError(RuntimeError):
    """An expansion fit is unstable or has too few points."""


@dataclass(frozen=True, eq=False)
class GaugeMap:
    """Geodesic defining function of a metric on its grid.

    ``rho`` and ``r = (cosh rho - 1)/sinh rho = tanh(rho/2)`` are NaN where
    ``s <= K`` (the defining function only exists near infinity).
    """

    n: int
    s: np.ndarray
    rho: np.ndarray
    r: np.ndarray
    K: float
    s_cal: float
    expansion: dict = field(default_factory=dict)

    def rho_at(self, s):
        """Exact ``rho(s) = 2 artanh(exp(-(s - K)))``."""
        x = np.asarray(s, dtype=float) - self.K
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(x > 0.0, 2.0 * np.arctanh(np.exp(-np.abs(x))), np.nan)


@dataclass(frozen=True)
class MassAspect:
    """Rotationally symmetric mass aspect ``h = h_scalar g_0``."""

    n: int
    h_scalar: float
    trace_integral: float
    moment: tuple[float, ...]
    fit: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_scalar(cls, n: int, h_scalar: float, fit: dict | None = None) -> "MassAspect":
        trace = (n - 1) * h_scalar * sphere_volume(n)
        # odd integrand over the sphere: the first moment vanishes identically
        return cls(n, float(h_scalar), float(trace), (0.0,) * n, fit or {})

    def to_json(self, ok: bool | None = None) -> str:
        ok = wang_inequality(self)[2] if ok is None else ok
        return json.dumps({"h_scalar": self.h_scalar, "trace_integral": self.trace_integral,
                           "moment": list(self.moment), "ok": bool(ok)}, indent=2,
                          sort_keys=True)


def geodesic_gauge(g: WarpedMetric, s_cal: float | None = None, *,
                   tail: float = 5.0, roundness_tol: float = 1e-8) -> GaugeMap:
    """Geodesic defining function calibrated at the grid node nearest ``s_cal``.

    Rejects metrics for which ``sinh(rho) W`` deviates from 1 by more than
    ``roundness_tol`` over the last ``tail`` units of the domain.
    """
    j = len(g.s) - 1 if s_cal is None else int(np.argmin(np.abs(g.s - s_cal)))
    s_c = float(g.s[j])
    K = s_c - math.asinh(float(g.W[j]))
    x = g.s - K
    far = (g.s >= g.s_hi - tail) & (x > 0.0)
    if np.count_nonzero(far) < 2:
        raise NotAsymptoticallyHyperbolic("domain too short to test the conformal infinity")
    q = g.W[far] / np.sinh(x[far])
    dev = float(np.max(np.abs(q - 1.0)))
    if not dev <= roundness_tol:
        raise NotAsymptoticallyHyperbolic(
            f"sinh(rho) W deviates from 1 by {dev:.3e} near infinity")
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(x > 0.0, np.exp(-np.abs(x)), np.nan)
        rho = np.where(x > 0.0, 2.0 * np.arctanh(r), np.nan)
    return GaugeMap(g.n, g.s.copy(), rho, r, float(K), s_c)


def expansion_residual(gauge: GaugeMap, g: WarpedMetric) -> np.ndarray:
    """``sinh^2(rho) W^2 - 1`` on the grid (NaN where ``rho`` is undefined)."""
    x = g.s - gauge.K
    with np.errstate(invalid="ignore", divide="ignore"):
        q = np.where(x > 0.0, g.W / np.sinh(np.where(x > 0.0, x, 1.0)), np.nan)
    return (q - 1.0) * (q + 1.0)


def fit_power_series(rho, y, orders, rho_max: float) -> tuple[np.ndarray, float]:
    """Least squares of ``y`` on ``rho^k``, ``k in orders``, scaled by ``rho_max``.

    Fitting ``y`` itself (rather than ``y/rho^n``) keeps rounding noise at
    small ``rho`` from being amplified.  Returns coefficients and rms residual.
    """
    t = np.asarray(rho) / rho_max
    basis = np.stack([t**k for k in orders], axis=1)
    coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
    resid = y - basis @ coef
    scale = np.array([rho_max ** (-k) for k in orders])
    return coef * scale, float(np.sqrt(np.mean(resid * resid)))


def extract_mass_aspect(gauge: GaugeMap, g: WarpedMetric, *, rho_max: float = 0.5,
                        terms: int = 9, min_points: int = 40) -> MassAspect:
    """Fit ``sinh^2(rho) W^2 - 1`` over ``rho <= rho_max``.

    Basis ``1, rho^n, ..., rho^{n+terms-1}``; ``h_scalar`` is ``n`` times the
    ``rho^n`` coefficient.  The constant term and the ``rho^{n+1}``
    coefficient are reported as calibration and remainder diagnostics.
    """
    n = g.n
    y = expansion_residual(gauge, g)
    rho = gauge.rho
    use = np.isfinite(rho) & (rho <= rho_max)
    if np.count_nonzero(use) < max(min_points, terms + 1):
        raise FitError("too few grid points in the expansion window")
    orders = [0] + [n + j for j in range(terms)]
    coef, rms = fit_power_series(rho[use], y[use], orders, rho_max)
    fit = {"constant": float(coef[0]), "rho_n": float(coef[1]),
           "rho_n1": float(coef[2]), "rms": rms, "points": int(np.count_nonzero(use)),
           "rho_max": rho_max}
    if not np.all(np.isfinite(coef)):
        raise FitError("non-finite expansion coefficients")
    return MassAspect.from_scalar(n, n * float(coef[1]), fit)


def gauge_shift_law(A: float, h: MassAspect, n: int | None = None) -> MassAspect:
    """Mass aspect after the conformal change ``(1 + v)^{4/(n-2)}``, ``v ~ A rho^n``."""
    n = h.n if n is None else n
    return MassAspect.from_scalar(n, h.h_scalar + 4.0 * (n + 1) * A / (n - 2))


def w_expansion_check(v, gauge: GaugeMap, A: float, *, rho_max: float = 0.05,
                      rel_tol: float = 0.02) -> dict:
    """Solve for the gauge correction ``w`` (``r_tilde = e^w r``) and fit its leading term.

    Radially, ``2 w_r + r w_r^2 = ((1+v)^{4/(n-2)} - 1)/r`` is the quadratic
    ``(1 + r w_r)^2 = (1+v)^{4/(n-2)}``, whose regular root gives
    ``w_r = ((1+v)^{2/(n-2)} - 1)/r`` with ``w(r=0) = 0``.  Since
    ``dr/r = -ds``, ``w(s) = ∫_s^∞ ((1+v)^{2/(n-2)} - 1) ds'``.  The leading
    term is ``(2/(n(n-2))) A rho^n``, written in ``rho``: ``rho ~ 2r``.
    """
    n = gauge.n
    v = np.asarray(v, dtype=float)
    a = 2.0 / (n - 2)
    integrand = np.expm1(a * np.log1p(v))
    s = gauge.s
    h = np.diff(s)
    seg = 0.5 * h * (integrand[1:] + integrand[:-1])
    # tail beyond the grid: integrand ~ a A rho^n and rho ~ 2 e^{-(s-K)}
    rho_end = float(gauge.rho[-1])
    tail = a * A * rho_end**n / n
    w = tail + np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    use = np.isfinite(gauge.rho) & (gauge.rho <= rho_max) & (np.abs(w) > 0.0)
    expected = 2.0 * A / (n * (n - 2))
    report = {"expected": expected, "coefficient": float("nan"), "rel_error": float("nan"),
              "ok": False}
    if A == 0.0 and np.all(v == 0.0):
        report.update(coefficient=0.0, rel_error=0.0, ok=True, w_max=0.0)
        return report
    if np.count_nonzero(use) < 10:
        report["error"] = "too few points in the fit window"
        return report
    coef, rms = fit_power_series(gauge.rho[use], w[use], [n, n + 1, n + 2], rho_max)
    rel = abs(coef[0] - expected) / abs(expected) if expected else abs(coef[0])
    report.update(coefficient=float(coef[0]), rel_error=float(rel), ok=bool(rel <= rel_tol),
                  rms=rms, w_max=float(np.max(np.abs(w))))
    return report


def wang_inequality(h: MassAspect, tol: float = 1e-9) -> tuple[float, float, bool]:
    """``(∫ Tr h, |∫ x Tr h|, lhs >= rhs - tol)``."""
    lhs = h.trace_integral
    rhs = float(np.linalg.norm(h.moment))
    return lhs, rhs, bool(lhs >= rhs - tol)
