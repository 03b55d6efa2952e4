"""Corner manifolds and their smoothing at scale ``nu``.

A corner manifold glues a center-regular inner warped metric on ``[0, s0]``
to an outer one on ``[s0, s_hi]`` with ``W`` continuous but ``W'`` jumping.
Smoothing mollifies the glued ``W'`` at the core scale ``eps = nu^2/100``
and blends back to the original through a cutoff supported in
``|s - s0| < nu/2``.  Since ``H = (n-1) W'/W``, the mollified jump puts a
spike ``2 (H_- - H_+) phi_eps(d)`` into the scalar curvature.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from .green import sphere_volume
from .warped import WarpedMetric, scalar_curvature

CORE_FACTOR = 0.01  # core half-width eps = CORE_FACTOR * nu^2


@lru_cache(maxsize=None)
def _bump_mass() -> float:
    with warnings.catch_warnings():
        # the requested accuracy sits at the roundoff floor; quad says so
        warnings.simplefilter("ignore", IntegrationWarning)
        val, _ = quad(lambda t: math.exp(-1.0 / (1.0 - t * t)), -1.0, 1.0,
                      epsabs=1e-16, epsrel=1e-15, limit=200)
    return val


def mollifier(t):
    """Unit-mass bump ``exp(-1/(1-t^2))/Z`` supported in ``(-1, 1)``."""
    t = np.asarray(t, dtype=float)
    inside = np.abs(t) < 1.0
    one_minus = np.where(inside, (1.0 - t) * (1.0 + t), 1.0)
    out = np.where(inside, np.exp(-1.0 / one_minus), 0.0) / _bump_mass()
    return out if out.ndim else float(out)


@lru_cache(maxsize=None)
def _tanh_sinh(h: float = 1.0 / 32.0, tmax: float = 3.2) -> tuple[np.ndarray, np.ndarray]:
    k = np.arange(-round(tmax / h), round(tmax / h) + 1) * h
    u = 0.5 * math.pi * np.sinh(k)
    x = np.tanh(u)
    w = h * 0.5 * math.pi * np.cosh(k) / np.cosh(u) ** 2
    return x, w


def _integrate(fn, a: float, b: float) -> float:
    """Tanh-sinh quadrature of a vectorised integrand over ``[a, b]``."""
    if b <= a:
        return 0.0
    x, w = _tanh_sinh()
    pts = 0.5 * (a + b) + 0.5 * (b - a) * x
    return 0.5 * (b - a) * float(np.dot(w, fn(pts)))


def mollifier_cdf(t):
    """``Theta(t) = ∫_{-1}^t phi``; a C-infinity step from 0 to 1."""
    t = np.asarray(t, dtype=float)
    out = np.array([_integrate(mollifier, -1.0, min(max(v, -1.0), 1.0)) for v in t.ravel()])
    out = np.clip(out, 0.0, 1.0).reshape(t.shape)
    out = np.where(t >= 1.0, 1.0, out)
    return out if out.ndim else float(out)


@dataclass(frozen=True, eq=False)
class CornerManifold:
    """Inner and outer warped metrics glued with a continuous ``W`` at ``s0``."""

    inside: WarpedMetric
    outside: WarpedMetric
    s0: float
    H_minus: float
    H_plus: float
    hypothesis_ok: bool

    @property
    def n(self) -> int:
        return self.inside.n

    @property
    def jump(self) -> float:
        """Mean-curvature jump ``H_- - H_+``."""
        return self.H_minus - self.H_plus

    @property
    def s_hi(self) -> float:
        return self.outside.s_hi

    def one_sided(self, s):
        """``(W, W', W'')`` of the glued metric; the outer piece from ``s0`` on."""
        s = np.asarray(s, dtype=float)
        lo = s < self.s0
        W, dW, ddW = (np.empty_like(s) for _ in range(3))
        if np.any(lo):
            W[lo], dW[lo], ddW[lo] = self.inside.evaluate(s[lo])
        if np.any(~lo):
            W[~lo], dW[~lo], ddW[~lo] = self.outside.evaluate(s[~lo])
        return W, dW, ddW


def make_corner(inside: WarpedMetric, outside: WarpedMetric, s0: float, *,
                allow_violation: bool = False, tol: float = 1e-10,
                curvature_tol: float = 1e-8) -> CornerManifold:
    """Glue ``inside`` on ``[0, s0]`` to ``outside`` on ``[s0, s_hi]``.

    Raises when ``W`` is discontinuous at ``s0`` or when a piece violates
    ``R >= -n(n-1)``; the latter can be downgraded to a flag with
    ``allow_violation`` for counterexample experiments.
    """
    n = inside.n
    if outside.n != n:
        raise ValueError("pieces must have the same dimension")
    if not inside.center_regular:
        raise ValueError("inner piece must be center-regular")
    if not (inside.s_lo < s0 <= inside.s_hi and outside.s_lo <= s0 < outside.s_hi):
        raise ValueError("s0 must lie in both domains")
    if abs(outside.s_lo - s0) > tol:
        raise ValueError("outer piece must start at s0")
    w_in, dw_in, _ = inside.evaluate(s0)
    w_out, dw_out, _ = outside.evaluate(s0)
    if abs(w_in - w_out) > tol * max(1.0, abs(w_in)):
        raise ValueError(f"warping mismatch at s0: {float(w_in)!r} vs {float(w_out)!r}")
    floor = -n * (n - 1) - curvature_tol
    r_in = scalar_curvature(inside.restrict(0.0, s0))
    r_out = scalar_curvature(outside)
    ok = bool(np.nanmin(r_in) >= floor and np.nanmin(r_out) >= floor)
    if not ok and not allow_violation:
        raise ValueError("a piece violates R >= -n(n-1); pass allow_violation to proceed")
    h_minus = float((n - 1) * dw_in / w_in)
    h_plus = float((n - 1) * dw_out / w_out)
    return CornerManifold(inside, outside, float(s0), h_minus, h_plus, ok)


@dataclass(frozen=True, eq=False)
class SmoothedMetric:
    """The glued metric with its corner mollified at scale ``nu``."""

    base: WarpedMetric
    corner: CornerManifold
    nu: float

    @property
    def eps(self) -> float:
        return CORE_FACTOR * self.nu**2

    @property
    def collar(self) -> tuple[float, float]:
        return (self.corner.s0 - self.nu / 2.0, self.corner.s0 + self.nu / 2.0)

    @property
    def core(self) -> tuple[float, float]:
        return (self.corner.s0 - self.eps, self.corner.s0 + self.eps)

    @property
    def d(self) -> np.ndarray:
        """Signed distance to the corner (arclength offset)."""
        return self.base.s - self.corner.s0


def max_nu(corner: CornerManifold) -> float:
    """Largest admissible ``nu``: the collar must fit inside both pieces."""
    return 2.0 * min(corner.s0, corner.outside.s_hi - corner.s0)


def corner_grid(s0: float, s_hi: float, nu: float, *, h_far: float = 0.01,
                core_points: int = 64, ratio: float = 1.03) -> np.ndarray:
    """Graded grid on ``[0, s_hi]``, uniform on the core and geometric outside.

    The collar edges ``s0 +- nu/2`` are grid nodes so the glue is exact there.
    """
    eps = CORE_FACTOR * nu**2
    h_core = 2.0 * eps / core_points
    offsets = list(np.linspace(0.0, eps, core_points // 2 + 1))
    h, x = h_core, eps
    while True:
        h = min(h * ratio, h_far)
        if x + h >= s_hi - s0 and x + h >= s0:
            break
        x += h
        offsets.append(x)
    offsets = np.array(offsets)
    right = s0 + offsets
    left = s0 - offsets[1:]
    grid = np.concatenate([left[::-1], right])
    grid = grid[(grid > 0.0) & (grid < s_hi)]
    edges = [0.0, s0 - nu / 2.0, s0 + nu / 2.0, s_hi]
    grid = np.unique(np.concatenate([grid, edges]))
    # drop nodes crowding the inserted edges
    keep = np.ones(len(grid), dtype=bool)
    for e in edges[1:3]:
        j = int(np.searchsorted(grid, e))
        for k in (j - 1, j + 1):
            if 0 < k < len(grid) - 1 and abs(grid[k] - e) < 0.25 * (grid[k + 1] - grid[k - 1]) / 2:
                keep[k] = False
    return grid[keep]


def _cutoff(d, nu):
    """``chi``: 1 on ``|d| <= nu/4``, 0 for ``|d| >= nu/2``, smooth in between."""
    x = (nu / 2.0 - np.abs(d)) / (nu / 4.0)
    inside = (x > 0.0) & (x < 1.0)
    chi = np.where(x >= 1.0, 1.0, 0.0)
    dchi = np.zeros_like(d)
    if np.any(inside):
        t = 2.0 * x[inside] - 1.0
        chi[inside] = mollifier_cdf(t)
        dchi[inside] = -np.sign(d[inside]) * mollifier(t) * 2.0 / (nu / 4.0)
    return chi, dchi


def _convolve_pieces(corner: CornerManifold, d: float, eps: float) -> tuple[float, float]:
    """``(phi_eps * W', phi_eps * W'')`` of the glued metric at offset ``d``.

    The integral is split where ``d - eps t`` crosses the corner, so each
    piece has a smooth integrand.
    """
    s0 = corner.s0

    def integrand(which):
        def fn(t):
            W, dW, ddW = corner.one_sided(s0 + d - eps * t)
            return mollifier(t) * (dW if which == 1 else ddW)
        return fn

    t_star = d / eps
    if t_star <= -1.0 or t_star >= 1.0:
        return (_integrate(integrand(1), -1.0, 1.0), _integrate(integrand(2), -1.0, 1.0))
    # t > t_star samples the inner piece, t < t_star the outer one
    parts = [(-1.0, t_star), (t_star, 1.0)]
    out = []
    for which in (1, 2):
        total = 0.0
        for a, b in parts:
            mid = 0.5 * (a + b)
            side = corner.inside if s0 + d - eps * mid < s0 else corner.outside

            def fn(t, side=side, which=which):
                s = s0 + d - eps * t
                s = np.clip(s, side.s_lo, side.s_hi)
                vals = side.evaluate(s)
                return mollifier(t) * vals[which]

            total += _integrate(fn, a, b)
        out.append(total)
    return out[0], out[1]


def smooth(corner: CornerManifold, nu: float, *, h_far: float = 0.01,
           core_points: int = 64) -> SmoothedMetric:
    """Mollify the corner at scale ``nu``; exact outside the collar."""
    if not 0.0 < nu < max_nu(corner):
        raise ValueError(f"nu must lie in (0, {max_nu(corner)})")
    n = corner.n
    s0 = corner.s0
    eps = CORE_FACTOR * nu**2
    grid = corner_grid(s0, corner.s_hi, nu, h_far=h_far, core_points=core_points)
    W, dW, ddW = corner.one_sided(grid)
    if corner.jump == 0.0:
        # a C^1 gluing has no kink: mollifying would only add O(eps^2) noise
        base = WarpedMetric(n, grid, W, dW, ddW, center_regular=True,
                            label=f"smoothed(nu={nu})")
        return SmoothedMetric(base, corner, float(nu))
    d = grid - s0
    a, b = s0 - nu / 2.0, s0 + nu / 2.0
    idx = np.nonzero((grid > a) & (grid < b))[0]
    dd = d[idx]
    chi, dchi = _cutoff(dd, nu)
    conv = np.array([_convolve_pieces(corner, x, eps) for x in dd])
    g1, g2 = dW[idx], ddW[idx]
    _, dw_in, _ = corner.inside.evaluate(s0)
    _, dw_out, _ = corner.outside.evaluate(s0)
    jump = float(dw_out - dw_in)
    conv_d = conv[:, 1] + jump * mollifier(dd / eps) / eps
    new_dW = g1 + chi * (conv[:, 0] - g1)
    new_ddW = g2 + dchi * (conv[:, 0] - g1) + chi * (conv_d - g2)

    # integrate W' across the collar from the inner edge
    nodes = np.concatenate([[grid[idx[0] - 1]], grid[idx], [grid[idx[-1] + 1]]])
    p = np.concatenate([[dW[idx[0] - 1]], new_dW, [dW[idx[-1] + 1]]])
    q = np.concatenate([[ddW[idx[0] - 1]], new_ddW, [ddW[idx[-1] + 1]]])

    def integrate(p, q):
        h = np.diff(nodes)
        return W[idx[0] - 1] + np.concatenate(
            [[0.0], np.cumsum(h * (p[1:] + p[:-1]) / 2.0 + h * h * (q[:-1] - q[1:]) / 12.0)])

    Wc = integrate(p, q)
    # close the tiny mismatch at the outer edge with a collar-supported bump
    mismatch = Wc[-1] - W[idx[-1] + 1]
    x = (nodes - s0) * (2.0 / nu)
    bump = mollifier(x) * (2.0 / nu)
    dbump = np.zeros_like(x)
    inner = np.abs(x) < 1.0
    dbump[inner] = bump[inner] * (-2.0 * x[inner] / (1.0 - x[inner] ** 2) ** 2) * (2.0 / nu)
    p = p - mismatch * bump
    q = q - mismatch * dbump
    Wc = integrate(p, q)

    W = W.copy(); dW = dW.copy(); ddW = ddW.copy()
    W[idx], dW[idx], ddW[idx] = Wc[1:-1], p[1:-1], q[1:-1]
    base = WarpedMetric(n, grid, W, dW, ddW, center_regular=True,
                        label=f"smoothed(nu={nu})")
    return SmoothedMetric(base, corner, float(nu))


def spike(sm: SmoothedMetric, d=None):
    """Model spike ``2 (H_- - H_+) (100/nu^2) phi(100 d / nu^2)``."""
    d = sm.d if d is None else np.asarray(d, dtype=float)
    return 2.0 * sm.corner.jump * mollifier(d / sm.eps) / sm.eps


def _negative_part(x):
    return np.maximum(-x, 0.0)


def rounding_floor(g: WarpedMetric) -> np.ndarray:
    """Rounding error of ``R`` evaluated from the samples ``W, W', W''``.

    ``1 - W'^2`` and ``W''/W`` lose about ``eps (1 + W'^2)/W^2`` and
    ``eps |W''/W|``; near a regular center this reaches ``1e-9``.  The
    extrapolated center value inherits the floor of its stencil.
    """
    n = g.n
    eps = np.finfo(float).eps
    with np.errstate(divide="ignore", invalid="ignore"):
        floor = 64.0 * eps * ((n - 1) * (n - 2) * (1.0 + g.dW**2) / g.W**2
                              + 2.0 * (n - 1) * np.abs(g.ddW / g.W) + n * (n - 1))
    if g.center_regular:
        floor[0] = 8.0 * np.max(floor[1:5])
    return floor


def curvature_excess(g: WarpedMetric, R=None) -> np.ndarray:
    """``R + n(n-1)`` with values inside the rounding floor set to zero."""
    n = g.n
    R = scalar_curvature(g) if R is None else np.asarray(R, dtype=float)
    excess = R + n * (n - 1)
    return np.where(np.abs(excess) <= rounding_floor(g), 0.0, excess)


def negative_part_norm(g: WarpedMetric, R=None) -> float:
    """``∫ ((R + n(n-1))^-)^{n/2} dvol`` with ``dvol = W^{n-1} vol(S^{n-1}) ds``."""
    n = g.n
    integrand = _negative_part(curvature_excess(g, R)) ** (n / 2.0) * g.W ** (n - 1)
    integrand = np.where(np.isfinite(integrand), integrand, 0.0)
    return float(sphere_volume(n) * np.trapezoid(integrand, g.s))


def f_source(g: WarpedMetric, R=None) -> np.ndarray:
    """``f = -(n-2)/(4(n-1)) (R + n(n-1))^-``, non-positive."""
    n = g.n
    f = -(n - 2) / (4.0 * (n - 1)) * _negative_part(curvature_excess(g, R))
    return np.where(np.isfinite(f), f, 0.0)


def smoothed_scalar_profile(sm: SmoothedMetric):
    """Curvature samples across the collar of the smoothed metric."""
    from .warped import curvature_samples

    lo, hi = sm.collar
    keep = (sm.base.s >= lo) & (sm.base.s <= hi)
    return [c for c, k in zip(curvature_samples(sm.base), keep) if k]


def dump_profile_csv(sm: SmoothedMetric, path) -> None:
    """Write ``d,R,spike,f`` rows over the collar with 17 significant digits."""
    R = scalar_curvature(sm.base)
    f = f_source(sm.base, R)
    sp = spike(sm)
    lo, hi = sm.collar
    keep = (sm.base.s >= lo) & (sm.base.s <= hi)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["d", "R", "spike", "f"])
        for row in zip(sm.d[keep], R[keep], sp[keep], f[keep]):
            w.writerow([f"{v:.17g}" for v in row])
