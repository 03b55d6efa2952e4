"""Decay coefficient of a radial solution from its integral representation.

Outside the sphere ``|y| = r0`` of the exterior chart (``|y| = 1/sinh rho``),
Green's identity with the kernel ``G_x`` gives, as ``x = lambda omega`` runs
to infinity and ``lambda^n G_x(y) -> C k(omega, y)``,
``C = c_n/θ̃(1)``, ``k = (t_y - omega.y)^{-n}``, ``t_y = sqrt(1 + |y|^2)``:

* ``A0 = C ∫_{exterior} (w - f v) k dvol``
* ``A1 = -C ∫_{|y|=r0} (dv/ds) k dσ``
* ``A2 = -n C ∫_{|y|=r0} v k (|y| - (omega.ŷ) t_y)/(t_y - omega.y) dσ``

with ``d/ds`` the outward unit normal derivative.  When the metric is
exactly hyperbolic outside ``r0`` these three terms reproduce the decay
coefficient ``A`` of ``v ~ A rho^n``; otherwise the mismatch
``A_{-1} = A_fit - (A0 + A1 + A2)`` measures the kernel correction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import roots_jacobi

from .green import kernel_table, sphere_volume
from .mass import GaugeMap, geodesic_gauge
from .warped import WarpedMetric


class QuadratureError(RuntimeError):
    """An angular or radial quadrature failed to converge."""


class DivergentSourceError(ValueError):
    """The source decays too slowly for the volume coefficient to converge."""


@dataclass(frozen=True)
class RepresentationConfig:
    """Boundary radius in the exterior chart, direction, and angular node count."""

    r0: float
    direction: tuple[float, ...]
    nodes: int = 24

    def __post_init__(self):
        if self.r0 <= 0.0:
            raise ValueError("r0 must be positive")
        w = np.asarray(self.direction, dtype=float)
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            raise ValueError("direction must be non-zero")
        object.__setattr__(self, "direction", tuple(float(c) for c in w / norm))
        if self.nodes < 4:
            raise ValueError("need at least 4 angular nodes per panel")

    @property
    def n(self) -> int:
        return len(self.direction)


@dataclass(frozen=True)
class CoefficientBundle:
    A0: float
    A1: float
    A2: float
    A_minus1_residual: float
    A_total: float

    def to_json(self, cfg: RepresentationConfig) -> str:
        return json.dumps({"A0": self.A0, "A1": self.A1, "A2": self.A2,
                           "A_fit": self.A_total, "residual": self.A_minus1_residual,
                           "r0": cfg.r0, "omega": list(cfg.direction)},
                          indent=2, sort_keys=True)


def chart_radius(gauge: GaugeMap, s):
    """``|y| = 1/sinh(rho(s))`` in the exterior chart."""
    rho = gauge.rho_at(s)
    return 1.0 / np.sinh(rho)


def chart_arclength(gauge: GaugeMap, r) -> float:
    """Inverse of :func:`chart_radius`: ``s = K - log tanh(rho/2)``, ``sinh rho = 1/r``."""
    rho = math.asinh(1.0 / r)
    return gauge.K - math.log(math.tanh(0.5 * rho))


def osculating_matrix(y, g: WarpedMetric, gauge: GaugeMap | None = None) -> np.ndarray:
    """``A_ij = g_ij + (g y)_i (g y)_j / (1 - y.g.y)`` at a chart point ``y``.

    In rotational symmetry ``g = Q P + ŷŷ^T/(1+|y|^2)`` with ``P`` the
    tangential projector and ``Q = sinh^2(rho) W^2``, so ``A = Q P + ŷŷ^T``.
    """
    y = np.asarray(y, dtype=float)
    gauge = geodesic_gauge(g) if gauge is None else gauge
    r = float(np.linalg.norm(y))
    if r == 0.0:
        raise ValueError("the chart origin is not an exterior point")
    s = chart_arclength(gauge, r)
    if not g.s_lo <= s <= g.s_hi:
        raise ValueError(f"|y| = {r} lies outside the exterior chart of the metric")
    W = float(g.evaluate(s)[0])
    Q = (W / r) ** 2  # sinh rho = 1/r
    yhat = y / r
    n = len(y)
    P = np.eye(n) - np.outer(yhat, yhat)
    gm = Q * P + np.outer(yhat, yhat) / (1.0 + r * r)
    gy = gm @ y
    return gm + np.outer(gy, gy) / (1.0 - y @ gm @ y)


def kernel(omega, y):
    """``k(omega, y) = (t_y - omega.y)^{-n}`` for points ``y`` (last axis = coordinates)."""
    omega = np.asarray(omega, dtype=float)
    y = np.asarray(y, dtype=float)
    n = omega.shape[-1]
    r2 = np.sum(y * y, axis=-1)
    t = np.sqrt(1.0 + r2)
    return _kernel_denominator(omega, y, r2, t) ** (-n)


def _kernel_denominator(omega, y, r2, t):
    # t - omega.y = (1 + |y_perp|^2)/(t + omega.y): no cancellation near the axis
    oy = y @ omega
    perp = y - oy[..., None] * omega
    return (1.0 + np.sum(perp * perp, axis=-1)) / (t + oy)


@lru_cache(maxsize=None)
def _jacobi(nodes: int, beta: float) -> tuple[np.ndarray, np.ndarray]:
    x, w = roots_jacobi(nodes, 0.0, beta)
    return x, w


@lru_cache(maxsize=None)
def _legendre(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(nodes)


def polar_rule(n: int, R: float, nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for ``∫_0^pi F(phi) sin^{n-2}(phi) dphi``.

    The kernel peaks at ``phi = 0`` with width ``~1/R``.  The first panel
    ``[0, eps1]``, ``eps1 = min(1/R, pi)``, uses Gauss-Jacobi nodes for the
    weight ``phi^{n-2}``; panels then double in width up to ``pi`` and use
    Gauss-Legendre.
    """
    eps1 = min(1.0 / max(R, 1e-300), math.pi)
    xj, wj = _jacobi(nodes, float(n - 2))
    # map u in [-1,1] with weight (1+u)^{n-2} onto phi = eps1 (1+u)/2
    phi0 = 0.5 * eps1 * (1.0 + xj)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(phi0 > 0.0, np.sin(phi0) / phi0, 1.0)
    w0 = wj * (0.5 * eps1) ** (n - 1) * ratio ** (n - 2)
    phis, weights = [phi0], [w0]
    xl, wl = _legendre(nodes)
    a = eps1
    while a < math.pi:
        b = min(2.0 * a, math.pi)
        p = 0.5 * (a + b) + 0.5 * (b - a) * xl
        phis.append(p)
        weights.append(0.5 * (b - a) * wl * np.sin(p) ** (n - 2))
        a = b
    return np.concatenate(phis), np.concatenate(weights)


def _sphere_points(omega: np.ndarray, R: float, phi: np.ndarray) -> np.ndarray:
    """Points ``R (cos phi omega + sin phi e)`` with ``e`` a unit vector normal to omega."""
    n = len(omega)
    basis = np.eye(n)[int(np.argmin(np.abs(omega)))]
    e = basis - (basis @ omega) * omega
    e /= np.linalg.norm(e)
    return R * (np.cos(phi)[:, None] * omega[None, :] + np.sin(phi)[:, None] * e[None, :])


def _sphere_integral(fn, omega: np.ndarray, R: float, nodes: int, tol: float = 1e-9) -> float:
    """``∫_{S^{n-1}} fn(y) dσ_0`` over ``|y| = R`` for integrands symmetric about omega."""
    n = len(omega)
    area = sphere_volume(n - 1)  # S^{n-2} orbit of each polar angle

    def rule(k):
        phi, w = polar_rule(n, R, k)
        return area * float(np.dot(w, fn(_sphere_points(omega, R, phi))))

    coarse, fine = rule(nodes), rule(2 * nodes)
    # Cartesian inputs limit the kernel's relative accuracy to about eps * R
    floor = 64.0 * np.finfo(float).eps * max(R, 1.0)
    if abs(fine - coarse) > max(tol, floor) * max(abs(fine), 1e-300):
        raise QuadratureError(f"angular quadrature not converged at R={R:.3e}: "
                              f"{coarse!r} vs {fine!r}")
    return fine


def kernel_sphere_integral(omega, R: float, nodes: int = 24) -> float:
    """``∫_{|y|=R} k(omega, y) dσ_0``."""
    omega = np.asarray(omega, dtype=float)
    return _sphere_integral(lambda y: kernel(omega, y), omega, R, nodes)


def normal_kernel_sphere_integral(omega, R: float, nodes: int = 24) -> float:
    """``∫_{|y|=R} k (|y| - (omega.ŷ) t_y)/(t_y - omega.y) dσ_0``."""
    omega = np.asarray(omega, dtype=float)
    n = len(omega)
    t = math.sqrt(1.0 + R * R)

    def fn(y):
        oy = y @ omega
        denom = _kernel_denominator(omega, y, R * R, t)
        return denom ** (-n) * (R - oy / R * t) / denom

    return _sphere_integral(fn, omega, R, nodes)


def _limit_constant(n: int) -> float:
    return kernel_table(n).limit_constant


def coeff_A1(dv_ds: float, g: WarpedMetric, cfg: RepresentationConfig,
             gauge: GaugeMap | None = None) -> float:
    """Boundary term carried by the normal derivative of ``v`` on ``|y| = r0``."""
    gauge = geodesic_gauge(g) if gauge is None else gauge
    n = cfg.n
    s_b = chart_arclength(gauge, cfg.r0)
    W = float(g.evaluate(s_b)[0])
    integral = kernel_sphere_integral(cfg.direction, cfg.r0, cfg.nodes)
    return -_limit_constant(n) * dv_ds * W ** (n - 1) * integral


def coeff_A2(v_b: float, g: WarpedMetric, cfg: RepresentationConfig,
             gauge: GaugeMap | None = None) -> float:
    """Boundary term carried by the value of ``v`` on ``|y| = r0``."""
    gauge = geodesic_gauge(g) if gauge is None else gauge
    n = cfg.n
    s_b = chart_arclength(gauge, cfg.r0)
    W = float(g.evaluate(s_b)[0])
    integral = normal_kernel_sphere_integral(cfg.direction, cfg.r0, cfg.nodes)
    return -n * _limit_constant(n) * v_b * W ** (n - 1) * integral


def coeff_A0(source, g: WarpedMetric, cfg: RepresentationConfig,
             gauge: GaugeMap | None = None, *, panel: float = 0.05,
             panel_nodes: int = 8, s_end: float | None = None,
             tail_window: float = 3.0) -> float:
    """Volume term ``C ∫ (w - f v) k dvol`` over the exterior of ``|y| = r0``.

    ``source`` is a callable of arclength or samples on ``g``'s grid
    (interpolated by a cubic spline).  Radial panels of width ``panel`` use
    Gauss-Legendre nodes; the angular integral uses :func:`polar_rule`.
    Convergence at infinity is checked from the decay of the radial
    integrand of ``|source|``; slower than ``e^{-0.05 s}`` is rejected.
    """
    gauge = geodesic_gauge(g) if gauge is None else gauge
    n = cfg.n
    if callable(source):
        src = source
    else:
        samples = np.asarray(source, dtype=float)
        if samples.shape != g.s.shape:
            raise ValueError("source samples must live on the metric grid")
        if not np.any(samples):
            return 0.0
        src = CubicSpline(g.s, samples)
    s_b = chart_arclength(gauge, cfg.r0)
    s_end = g.s_hi if s_end is None else s_end
    if s_end <= s_b:
        return 0.0
    count = max(1, int(math.ceil((s_end - s_b) / panel)))
    edges = np.linspace(s_b, s_end, count + 1)
    xl, wl = _legendre(panel_nodes)
    pts = (0.5 * (edges[1:] + edges[:-1])[:, None]
           + 0.5 * np.diff(edges)[:, None] * xl[None, :]).ravel()
    wts = (0.5 * np.diff(edges)[:, None] * wl[None, :]).ravel()
    values = np.asarray(src(pts), dtype=float)
    if not np.any(values):
        return 0.0
    W = g.evaluate(pts)[0]
    R = chart_radius(gauge, pts)
    shells = np.array([kernel_sphere_integral(cfg.direction, float(r), cfg.nodes) for r in R])
    radial = values * W ** (n - 1) * shells
    tail = pts >= s_end - tail_window
    mags = np.abs(radial[tail])
    if np.any(mags > 0.0):
        keep = mags > 0.0
        slope = np.polyfit(pts[tail][keep], np.log(mags[keep]), 1)[0]
        if slope > -0.05 and np.max(mags) > 1e-14 * np.max(np.abs(radial)):
            raise DivergentSourceError(
                f"radial integrand decays like e^({slope:.3f} s); the volume term diverges")
    return _limit_constant(n) * float(np.dot(wts, radial))


def represent(v, dv, source, g: WarpedMetric, cfg: RepresentationConfig, A_fit: float,
              gauge: GaugeMap | None = None) -> CoefficientBundle:
    """All three coefficients for solution samples ``v, dv`` on ``g``'s grid."""
    gauge = geodesic_gauge(g) if gauge is None else gauge
    s_b = chart_arclength(gauge, cfg.r0)
    v_b = float(CubicSpline(g.s, v)(s_b))
    dv_b = float(CubicSpline(g.s, dv)(s_b))
    A0 = coeff_A0(source, g, cfg, gauge)
    A1 = coeff_A1(dv_b, g, cfg, gauge)
    A2 = coeff_A2(v_b, g, cfg, gauge)
    return cross_check(A_fit, A0, A1, A2)


def cross_check(A_fit: float, A0: float, A1: float, A2: float) -> CoefficientBundle:
    """Bundle with the residual ``A_{-1} = A_fit - (A0 + A1 + A2)``."""
    return CoefficientBundle(float(A0), float(A1), float(A2),
                             float(A_fit - (A0 + A1 + A2)), float(A_fit))


def relative_residual(bundle: CoefficientBundle) -> float:
    return abs(bundle.A_minus1_residual) / max(abs(bundle.A_total), 1e-12)
