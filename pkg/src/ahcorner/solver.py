"""Radial solver for ``-Δ_g v + n v + f v = w`` on warped products.

Radially the equation is ``-v'' - (n-1)(W'/W) v' + (n + f) v = w``.  It is
discretised with second-order three-point differences on the metric's grid
(uniform or smoothly graded), closed by

* ``v'(0) = 0`` at a regular center, where ``(n-1)(W'/W) v' -> (n-1) v''``;
* ``v'/v = G'/G`` at ``s_hi``, the log-derivative of the decaying mode.  When
  ``W = sinh(s - K)`` near infinity this is the kernel profile ``G0(s - K)``.

The tridiagonal system is solved with a banded direct solver.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .green import green_log_derivative, kernel_table
from .mass import GaugeMap, geodesic_gauge
from .warped import (WarpedMetric, conformal_reparametrize, derivative_samples,
                     scalar_curvature)


class SolverError(RuntimeError):
    """The discrete system could not be solved reliably."""


class DecayFitError(RuntimeError):
    """The decay fit window is unusable."""


@dataclass(frozen=True)
class DecaySpec:
    """Decay rates of ``f`` and ``w`` and the target weight for ``v``."""

    kappa: float
    eta: float
    delta: float

    def compliant(self, n: int) -> bool:
        return self.kappa > 2.0 and self.eta > n + 1


@dataclass(frozen=True, eq=False)
class SolverInput:
    g: WarpedMetric
    f: np.ndarray
    w: np.ndarray
    decay_spec: DecaySpec | None = None

    def __post_init__(self):
        for name in ("f", "w"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != self.g.s.shape:
                raise ValueError(f"{name} must be sampled on the metric grid")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


@dataclass(frozen=True, eq=False)
class SolveResult:
    g: WarpedMetric
    s: np.ndarray
    v: np.ndarray
    dv: np.ndarray
    f: np.ndarray
    w: np.ndarray
    residual: np.ndarray
    residual_norm: float
    A: float
    fit_order: float
    positive: bool
    weighted_norm_delta: float
    m_matrix: bool
    gauge: GaugeMap | None = None
    info: dict = field(default_factory=dict)

    @property
    def rho(self) -> np.ndarray:
        return self.gauge.rho if self.gauge is not None else np.full_like(self.s, np.nan)


def _tridiagonal(g: WarpedMetric, f: np.ndarray, beta: float):
    """Bands ``(lower, diag, upper)`` of the discrete operator.

    Interior rows use the conservative form
    ``-(W^{n-1} v')'/W^{n-1}`` with ``W^{n-1}`` at cell midpoints, so the
    off-diagonals are never positive.  At a regular center the half cell
    ``[0, h/2]`` has no inner flux.
    """
    if not g.center_regular:
        raise SolverError("the solver needs a center-regular metric")
    n = g.n
    s = g.s
    m = len(s)
    h = np.diff(s)
    mid = 0.5 * (s[1:] + s[:-1])
    wmid = g.evaluate(mid)[0] ** (n - 1)
    # dual-cell volumes ∫ W^{n-1} ds over [mid_{j-1}, mid_j], 3-point Gauss per half cell
    x, wq = np.polynomial.legendre.leggauss(3)
    left = np.concatenate([[s[0]], mid])
    right = np.concatenate([mid, [s[-1]]])

    def half_volumes(a, b):
        pts = 0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * x[None, :]
        vals = g.evaluate(pts.ravel())[0].reshape(pts.shape) ** (n - 1)
        return 0.5 * (b - a) * (vals @ wq)

    vol = half_volumes(left, s) + half_volumes(s, right)
    lower = np.zeros(m)
    diag = np.zeros(m)
    upper = np.zeros(m)
    j = np.arange(1, m - 1)
    lower[j] = -wmid[j - 1] / (h[j - 1] * vol[j])
    upper[j] = -wmid[j] / (h[j] * vol[j])
    diag[j] = -(lower[j] + upper[j]) + n + f[j]
    # center: the half cell [0, h/2] has no inner flux
    upper[0] = -wmid[0] / (h[0] * vol[0])
    diag[0] = -upper[0] + n + f[0]
    # far end: ghost v_{N+1} = v_{N-1} + 2 h beta v_N on a locally uniform cell
    hN = h[-1]
    qN = (n - 1) * g.dW[-1] / g.W[-1]
    c_plus = -1.0 / hN**2 - qN / (2.0 * hN)
    c_minus = -1.0 / hN**2 + qN / (2.0 * hN)
    diag[-1] = 2.0 / hN**2 + n + f[-1] + c_plus * 2.0 * hN * beta
    lower[-1] = c_minus + c_plus
    return lower, diag, upper


def _apply(lower, diag, upper, v):
    out = diag * v
    out[1:] += lower[1:] * v[:-1]
    out[:-1] += upper[:-1] * v[1:]
    return out


def robin_coefficient(g: WarpedMetric, gauge: GaugeMap | None = None) -> float:
    """``G0'/G0`` at ``s_hi - K``, the decaying-mode log-derivative."""
    K = 0.0 if gauge is None else gauge.K
    return green_log_derivative(kernel_table(g.n), g.s_hi - K)


def weighted_norm(u, g: WarpedMetric, delta: float, k: int = 0,
                  gauge: GaugeMap | None = None) -> float:
    """Discrete ``sup rho^{-delta} max_{j<=k} |d^j u/ds^j|`` over the grid.

    The weight is ``rho^{-delta}`` where the defining function exists and 1
    on the compact core.
    """
    if k not in (0, 1, 2):
        raise ValueError("k must be 0, 1 or 2")
    gauge = geodesic_gauge(g) if gauge is None else gauge
    u = np.asarray(u, dtype=float)
    derivs = [np.abs(u)]
    if k >= 1:
        du = derivative_samples(g.s, u)
        derivs.append(np.abs(du))
    if k >= 2:
        derivs.append(np.abs(derivative_samples(g.s, du)))
    mag = np.max(np.stack(derivs), axis=0)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        weight = np.where(np.isfinite(gauge.rho), gauge.rho ** (-delta), 1.0)
    vals = mag * weight
    return float(np.nanmax(vals))


def extract_decay(v, gauge: GaugeMap, s_hi: float | None = None,
                  window: tuple[float, float] | None = None) -> tuple[float, float]:
    """``(A, fit_order)`` from the tail of ``v``.

    ``fit_order`` is the slope of ``log|v|`` against ``log rho``; ``A`` is the
    ``rho^n`` coefficient of a fit ``v = A rho^n + B rho^{n+1}`` with the
    order fixed, so that a slightly off slope does not bias it.  The default
    window is ``[s_hi - 6, s_hi - 2]``.
    """
    s = gauge.s
    s_hi = float(s[-1]) if s_hi is None else s_hi
    lo, hi = (s_hi - 6.0, s_hi - 2.0) if window is None else window
    v = np.asarray(v, dtype=float)
    use = (s >= lo) & (s <= hi) & np.isfinite(gauge.rho)
    if np.count_nonzero(use) < 5:
        raise DecayFitError("fit window holds fewer than 5 grid points")
    vv = v[use]
    if np.any(np.abs(vv) < 1e-280):
        raise DecayFitError("solution underflows in the fit window")
    if np.any(np.sign(vv) != np.sign(vv[0])):
        raise DecayFitError("solution changes sign in the fit window")
    rho = gauge.rho[use]
    x = np.log(rho)
    slope, _ = np.polyfit(x, np.log(np.abs(vv)), 1)
    n = gauge.n
    basis = np.stack([rho**n, rho ** (n + 1)], axis=1) / rho[:, None] ** n
    coef, *_ = np.linalg.lstsq(basis, vv / rho**n, rcond=None)
    return float(coef[0]), float(slope)


def solve(inp: SolverInput, *, rel_tol: float = 1e-9, fit: bool = True) -> SolveResult:
    """Solve the radial boundary value problem on ``inp.g``'s grid."""
    g = inp.g
    n = g.n
    f = np.asarray(inp.f, dtype=float)
    w = np.asarray(inp.w, dtype=float)
    gauge = geodesic_gauge(g)
    beta = robin_coefficient(g, gauge)
    lower, diag, upper = _tridiagonal(g, f, beta)
    m_matrix = bool(np.all(lower[1:] <= 0.0) and np.all(upper[:-1] <= 0.0)
                    and np.all(diag > 0.0))
    ab = np.zeros((3, len(diag)))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    try:
        v = solve_banded((1, 1), ab, w)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"discrete operator is singular: {exc}") from exc
    if not np.all(np.isfinite(v)):
        raise SolverError("non-finite solution; the operator may not be invertible")
    residual = _apply(lower, diag, upper, v) - w
    scale = max(float(np.max(np.abs(w))), float(np.max(np.abs(diag * v))), 1e-300)
    residual_norm = float(np.max(np.abs(residual)) / scale)
    if residual_norm > rel_tol:
        raise SolverError(f"relative residual {residual_norm:.3e} exceeds {rel_tol:.1e}")
    dv = derivative_samples(g.s, v)
    A = order = float("nan")
    info = {"robin": beta, "K": gauge.K}
    if fit and np.any(v != 0.0):
        try:
            A, order = extract_decay(v, gauge, g.s_hi)
        except DecayFitError as exc:
            info["fit_error"] = str(exc)
    if math.isfinite(order):
        # forcing slower than rho^n shows up as a deficit in the fitted order
        info["order_ok"] = bool(abs(order - n) <= 0.02 * n)
    if inp.decay_spec is not None:
        info["compliant"] = inp.decay_spec.compliant(n)
    if np.any(v != 0.0):
        wn = weighted_norm(v, g, n - 0.1, 2, gauge)
    else:
        wn = 0.0
    res = SolveResult(g, g.s, v, dv, f, w, residual, residual_norm, A, order,
                      False, wn, m_matrix, gauge, info)
    object.__setattr__(res, "positive", check_positivity(res))
    return res


def second_derivative(res: SolveResult) -> np.ndarray:
    """``v''`` recovered from the equation, consistent with the discrete solve."""
    g = res.g
    n = g.n
    with np.errstate(divide="ignore", invalid="ignore"):
        q = (n - 1) * g.dW / g.W
        ddv = (n + res.f) * res.v - res.w - q * res.dv
    if g.center_regular:
        # at the center the first-order term becomes (n-1) v''(0)
        ddv[0] = ((n + res.f[0]) * res.v[0] - res.w[0]) / n
    return ddv


def check_positivity(res: SolveResult) -> bool:
    """``v > 0`` on the whole grid, decaying towards the far end."""
    v = res.v
    if not np.all(v > 0.0):
        return False
    return bool(v[-1] < v[len(v) // 2] or v[-1] < 1e-200)


def deformation_gap(v_value, n: int):
    """``(1+v)^{4/(n-2)} - [1 + 4/(n-2) - 4/((n-2)(1+v))]``, non-negative for ``v >= 0``."""
    v = np.asarray(v_value, dtype=float)
    if np.any(v < 0.0):
        raise ValueError("deformation gap requires v >= 0")
    p = 4.0 / (n - 2)
    # written to stay accurate as v -> 0: both sides agree to first order
    gap = np.expm1(p * np.log1p(v)) - p * v / (1.0 + v)
    return gap if gap.ndim else float(gap)


@dataclass(frozen=True)
class DeformationReport:
    margin: float
    location: float
    ok: bool
    tol: float


def certify_deformation(g: WarpedMetric, res: SolveResult, tol: float = 1e-6,
                        sign: float = 1.0) -> DeformationReport:
    """Check ``R[(1+v)^{4/(n-2)} g] >= -n(n-1) - tol`` at every grid point.

    ``sign = -1`` deforms by ``1 - v`` instead (a negative-control run).
    """
    n = g.n
    v = sign * res.v
    dv = sign * res.dv
    ddv = sign * second_derivative(res)
    u = 1.0 + v
    if np.any(u <= 0.0):
        return DeformationReport(-math.inf, float(g.s[int(np.argmin(u))]), False, tol)
    deformed = conformal_reparametrize(g, u, dv, ddv)
    margin = scalar_curvature(deformed) + n * (n - 1)
    j = int(np.nanargmin(margin))
    return DeformationReport(float(margin[j]), float(g.s[j]), bool(margin[j] >= -tol), tol)


def dump_solution_csv(res: SolveResult, path) -> None:
    """Write ``s,v,residual,rho`` rows with 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "v", "residual", "rho"])
        for row in zip(res.s, res.v, res.residual, res.rho):
            w.writerow([f"{x:.17g}" for x in row])
