"""Rotationally symmetric metrics ``g = ds^2 + W(s)^2 g_0`` in arclength gauge.

A metric is stored as samples of ``W, W', W''`` on a strictly increasing
grid, optionally backed by a closed-form profile.  Off-grid evaluation uses
the profile when present and otherwise a quintic Hermite interpolant built
from the three sampled derivatives.

For ``n``-dimensional warped products with level spheres ``S^{n-1}``:

* ``R = -2(n-1) W''/W + (n-1)(n-2)(1 - W'^2)/W^2``
* ``H = (n-1) W'/W`` (outward normal ``d/ds``)
* ``R_Sigma = (n-1)(n-2)/W^2`` and ``|A|^2 = (n-1)(W'/W)^2``

and the traced Gauss equation ``R = R_Sigma - |A|^2 - H^2 - 2 dH/ds`` holds
identically.  For ``W = sinh`` both sides reduce to ``-n(n-1)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import BPoly

Profile = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class CurvatureSample:
    """Curvature quantities of the level sphere at arclength ``s``."""

    s: float
    R: float
    H: float
    normA2: float
    R_Sigma: float


def derivative_samples(s: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Fourth-order derivative of samples on a (possibly non-uniform) grid.

    Five-point stencils, shifted to be one-sided at the two ends; the
    weights come from batched Vandermonde solves.
    """
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    m = len(s)
    if m < 5:
        raise ValueError("need at least 5 samples for fourth-order differences")
    lo = np.clip(np.arange(m) - 2, 0, m - 5)
    idx = lo[:, None] + np.arange(5)[None, :]
    h = s[idx] - s[:, None]
    # scale offsets per row to keep the Vandermonde systems well conditioned
    scale = np.max(np.abs(h), axis=1, keepdims=True)
    t = h / scale
    vander = t[:, None, :] ** np.arange(5)[None, :, None]
    rhs = np.zeros((m, 5))
    rhs[:, 1] = 1.0
    weights = np.linalg.solve(vander, rhs[..., None])[..., 0] / scale
    return np.sum(weights * y[idx], axis=1)


@dataclass(frozen=True, eq=False)
class WarpedMetric:
    """Warped product ``ds^2 + W(s)^2 g_0`` of dimension ``n``."""

    n: int
    s: np.ndarray
    W: np.ndarray
    dW: np.ndarray
    ddW: np.ndarray
    profile: Optional[Profile] = None
    center_regular: bool = False
    label: str = ""
    _spline: BPoly = field(init=False, repr=False)

    def __post_init__(self):
        for name in ("s", "W", "dW", "ddW"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.n < 3:
            raise ValueError("dimension must be >= 3")
        if not (self.s.shape == self.W.shape == self.dW.shape == self.ddW.shape):
            raise ValueError("sample arrays must share the grid shape")
        if self.s.ndim != 1 or len(self.s) < 5:
            raise ValueError("need a 1-D grid with at least 5 points")
        if np.any(np.diff(self.s) <= 0.0):
            raise ValueError("grid must be strictly increasing")
        if not np.all(np.isfinite(self.W)):
            raise ValueError("W samples must be finite")
        if self.center_regular:
            if self.s[0] != 0.0 or self.W[0] != 0.0 or abs(self.dW[0] - 1.0) > 1e-6:
                raise ValueError("center-regular metrics need s=0, W(0)=0, W'(0)=1")
            if np.any(self.W[1:] <= 0.0):
                raise ValueError("W must be positive away from the center")
        elif np.any(self.W <= 0.0):
            raise ValueError("W must be positive on the domain")
        y = np.stack([self.W, self.dW, self.ddW], axis=1)
        object.__setattr__(self, "_spline", BPoly.from_derivatives(self.s, y))

    @classmethod
    def from_profile(cls, n: int, s, profile: Profile, *, center_regular: bool = False,
                     label: str = "") -> "WarpedMetric":
        s = np.asarray(s, dtype=float)
        W, dW, ddW = profile(s)
        return cls(n, s, W, dW, ddW, profile=profile, center_regular=center_regular,
                   label=label)

    @classmethod
    def from_samples(cls, n: int, s, W, dW=None, ddW=None, *,
                     center_regular: bool = False, label: str = "") -> "WarpedMetric":
        """Build from samples; missing derivatives use fourth-order differences."""
        s = np.asarray(s, dtype=float)
        W = np.asarray(W, dtype=float)
        dW = derivative_samples(s, W) if dW is None else np.asarray(dW, dtype=float)
        ddW = derivative_samples(s, dW) if ddW is None else np.asarray(ddW, dtype=float)
        return cls(n, s, W, dW, ddW, center_regular=center_regular, label=label)

    @property
    def s_lo(self) -> float:
        return float(self.s[0])

    @property
    def s_hi(self) -> float:
        return float(self.s[-1])

    def evaluate(self, s) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(W, W', W'')`` at arbitrary points of the domain."""
        s = np.asarray(s, dtype=float)
        tol = 1e-12 * max(1.0, abs(self.s_hi))
        if np.any(s < self.s_lo - tol) or np.any(s > self.s_hi + tol):
            raise ValueError("evaluation point outside the metric domain")
        if self.profile is not None:
            return tuple(np.asarray(a, dtype=float) for a in self.profile(s))
        return self._spline(s), self._spline(s, 1), self._spline(s, 2)

    def restrict(self, s_lo: float, s_hi: float) -> "WarpedMetric":
        """Sub-metric on the grid points inside ``[s_lo, s_hi]``."""
        keep = (self.s >= s_lo) & (self.s <= s_hi)
        return WarpedMetric(self.n, self.s[keep], self.W[keep], self.dW[keep],
                            self.ddW[keep], profile=self.profile,
                            center_regular=self.center_regular and s_lo <= 0.0,
                            label=self.label)


def _values(g: WarpedMetric, s):
    if s is None:
        return g.s, g.W, g.dW, g.ddW
    s = np.asarray(s, dtype=float)
    W, dW, ddW = g.evaluate(s)
    return s, W, dW, ddW


def _center_limit(g: WarpedMetric, s, values):
    """Replace the 0/0 value at a regular center by polynomial extrapolation."""
    if s is None and g.center_regular:
        values = np.array(values, dtype=float)
        x = g.s[1:5]
        coeff = np.polyfit(x, values[1:5], 3)
        values[0] = np.polyval(coeff, 0.0)
    return values


def scalar_curvature(g: WarpedMetric, s=None):
    """Scalar curvature; on the grid when ``s`` is None."""
    n = g.n
    pts, W, dW, ddW = _values(g, s)
    with np.errstate(divide="ignore", invalid="ignore"):
        R = -2.0 * (n - 1) * ddW / W + (n - 1) * (n - 2) * (1.0 - dW * dW) / (W * W)
    return _center_limit(g, s, R)


def mean_curvature(g: WarpedMetric, s=None):
    """``H = (n-1) W'/W`` of the level sphere, positive when spheres expand."""
    _, W, dW, _ = _values(g, s)
    with np.errstate(divide="ignore", invalid="ignore"):
        return (g.n - 1) * dW / W


def curvature_samples(g: WarpedMetric, s=None) -> list[CurvatureSample]:
    n = g.n
    pts, W, dW, _ = _values(g, s)
    R = np.atleast_1d(scalar_curvature(g, s))
    H = np.atleast_1d(mean_curvature(g, s))
    W, dW = np.atleast_1d(W), np.atleast_1d(dW)
    with np.errstate(divide="ignore", invalid="ignore"):
        # a regular center has W = 0: both entries are infinite there
        normA2 = (n - 1) * (dW / W) ** 2
        R_sigma = (n - 1) * (n - 2) / W**2
    return [CurvatureSample(float(sk), float(R[k]), float(H[k]), float(normA2[k]),
                            float(R_sigma[k]))
            for k, sk in enumerate(np.atleast_1d(pts))]


def riccati_residual(g: WarpedMetric, s=None):
    """``R - [R_Sigma - (|A|^2 + H^2) - 2 dH/ds]`` with ``dH/ds`` from ``W''``."""
    n = g.n
    pts, W, dW, ddW = _values(g, s)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = dW / W
        R_sigma = (n - 1) * (n - 2) / (W * W)
        normA2 = (n - 1) * q * q
        H = (n - 1) * q
        dH = (n - 1) * (ddW / W - q * q)
        rhs = R_sigma - (normA2 + H * H) - 2.0 * dH
    res = scalar_curvature(g, s) - rhs
    if s is None and g.center_regular:
        res = np.array(res)
        res[0] = 0.0  # both sides are the same 0/0 limit at the center
    return res


def _hyperbolic_profile(s):
    return np.sinh(s), np.cosh(s), np.sinh(s)


def make_hyperbolic(n: int, s_hi: float, num: int = 2001, s_lo: float = 0.0) -> WarpedMetric:
    """Hyperbolic space, ``W = sinh s`` on ``[s_lo, s_hi]``."""
    if not s_hi > s_lo >= 0.0:
        raise ValueError("need 0 <= s_lo < s_hi")
    s = np.linspace(s_lo, s_hi, num)
    return WarpedMetric.from_profile(n, s, _hyperbolic_profile,
                                     center_regular=(s_lo == 0.0), label="hyperbolic")


def ads_potential(n: int, m: float, r):
    """``V(r) = 1 + r^2 - 2 m r^{2-n}``."""
    r = np.asarray(r, dtype=float)
    return 1.0 + r * r - 2.0 * m * r ** (2 - n)


def make_ads_schwarzschild(n: int, m: float, r_lo: float, s_hi: float, *,
                           s_lo: float = 0.0, num: int = 2001,
                           rtol: float = 1e-12) -> WarpedMetric:
    """AdS-Schwarzschild exterior in arclength gauge with ``W(s_lo) = r_lo``.

    ``W`` solves ``dW/ds = sqrt(V(W))``.  Writing ``W = sinh(x + E(x))`` with
    ``x = s - K`` turns this into ``dE/dx = -x_/(1 + sqrt(1 - x_))``,
    ``x_ = 2m W^{2-n}/(1+W^2)``, where ``E`` decays like ``e^{-n x}``.  ``E``
    is integrated inward from far out, so the relative tolerance applies to
    ``E`` itself and ``W`` keeps full relative accuracy.  The shift ``K`` is
    fixed by the event ``W = r_lo``.
    """
    if m < 0.0:
        raise ValueError("mass parameter must be non-negative")
    if r_lo <= 0.0 or s_hi <= s_lo:
        raise ValueError("need r_lo > 0 and s_hi > s_lo")
    # V is increasing in r for m >= 0, so positivity at r_lo suffices
    if ads_potential(n, m, r_lo) <= 0.0:
        raise ValueError(f"V(r_lo) <= 0: r_lo = {r_lo} is inside the horizon")

    def rate(x, e):
        r = np.sinh(x + e)
        q = 2.0 * m * r ** (2 - n) / (1.0 + r * r)
        return -q / (1.0 + np.sqrt(1.0 - q))

    def reached(x, e):
        return math.sinh(x + e[0]) - r_lo

    reached.terminal = True
    x_start = math.asinh(r_lo)
    x_far = x_start + (s_hi - s_lo) + 5.0
    # leading tail E ~ m 2^n e^{-n x}/n
    e_far = m * 2.0**n * math.exp(-n * x_far) / n
    sol = solve_ivp(lambda x, e: rate(x, e), (x_far, x_start - 50.0), [e_far],
                    method="DOP853", rtol=rtol, atol=1e-300, dense_output=True,
                    events=reached)
    if sol.status != 1:
        raise RuntimeError(f"arclength integration failed: {sol.message}")
    x0 = float(sol.t_events[0][0])
    dense = sol.sol

    def profile(s):
        s = np.asarray(s, dtype=float)
        x = np.clip(s - s_lo + x0, x0, x_far)
        r = np.where(s == s_lo, r_lo, np.sinh(x + dense(x)[0]))
        return r, np.sqrt(ads_potential(n, m, r)), r + m * (n - 2) * r ** (1 - n)

    s = np.linspace(s_lo, s_hi, num)
    return WarpedMetric.from_profile(n, s, profile, label=f"ads-schwarzschild(m={m})")


def conformal_reparametrize(g: WarpedMetric, u, du=None, ddu=None) -> WarpedMetric:
    """Rewrite ``u^{4/(n-2)} (ds^2 + W^2 g_0)`` as a warped product.

    With ``a = 2/(n-2)``: ``ds_hat = u^a ds`` and ``W_hat = u^a W``.  ``u`` and
    its derivatives are samples on ``g``'s grid; missing derivatives use
    fourth-order differences.
    """
    n = g.n
    u = np.asarray(u, dtype=float)
    if u.shape != g.s.shape:
        raise ValueError("factor samples must live on the metric grid")
    if np.any(u <= 0.0):
        raise ValueError("conformal factor must be positive")
    du = derivative_samples(g.s, u) if du is None else np.asarray(du, dtype=float)
    ddu = derivative_samples(g.s, du) if ddu is None else np.asarray(ddu, dtype=float)
    a = 2.0 / (n - 2)
    ua = u**a
    q = du / u
    # ŝ = ∫ u^a ds, integrated with the cubic Hermite rule (exact derivative a u^a q)
    dua = a * ua * q
    h = np.diff(g.s)
    pieces = h * (ua[1:] + ua[:-1]) / 2.0 + h * h * (dua[:-1] - dua[1:]) / 12.0
    s_hat = g.s[0] + np.concatenate([[0.0], np.cumsum(pieces)])
    W_hat = ua * g.W
    # dŴ/dŝ = W' + a q W, then differentiate again and divide by u^a
    dW_hat = g.dW + a * q * g.W
    dq = ddu / u - q * q
    ddW_hat = (g.ddW + a * dq * g.W + a * q * g.dW) / ua
    return WarpedMetric(n, s_hat, W_hat, dW_hat, ddW_hat,
                        center_regular=g.center_regular, label=f"conformal({g.label})")


def conformal_scalar_curvature(g: WarpedMetric, u, du, ddu):
    """Scalar curvature of ``u^{4/(n-2)} g`` from the conformal transformation law.

    ``R_hat = u^{-(n+2)/(n-2)} (-(4(n-1)/(n-2)) Δu + R u)`` with the radial
    Laplacian ``Δu = u'' + (n-1)(W'/W) u'``.
    """
    n = g.n
    u, du, ddu = (np.asarray(a, dtype=float) for a in (u, du, ddu))
    with np.errstate(divide="ignore", invalid="ignore"):
        lap = ddu + (n - 1) * g.dW / g.W * du
    R = scalar_curvature(g)
    return u ** (-(n + 2) / (n - 2)) * (-4.0 * (n - 1) / (n - 2) * lap + R * u)


def dump_metric_csv(g: WarpedMetric, path) -> None:
    """Write ``s,W,Wprime,R,H`` rows with 17 significant digits."""
    R = scalar_curvature(g)
    H = mean_curvature(g)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "W", "Wprime", "R", "H"])
        for row in zip(g.s, g.W, g.dW, R, H):
            w.writerow([f"{v:.17g}" for v in row])
