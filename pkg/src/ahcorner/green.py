"""Fundamental solution of ``-Δ + n`` on hyperbolic space.

The radial profile is

    G0(s) = c_n / θ̃(1) · θ̃(cosh s) / (sinh^{n-2} s · cosh^2 s),

with ``θ̃(t) = Σ_{i≥1} P_i t^{-2(i-1)}``, ``P_1 = 1`` and
``P_i / P_{i-1} = 1 - n/(2i + n - 1)``.  The coefficients decay like
``i^{-n/2}``, so near ``t = 1`` (short distances) the plain partial sums
converge slowly.  Past a few hundred terms the tail is replaced by its
asymptotic integral ``P_i ≈ K (i + n/4)^{-n/2}`` (Gamma-ratio asymptotics)
plus a midpoint Euler-Maclaurin correction, and the result is accepted only
when two successive truncations agree to ``tol``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

_FIRST_BLOCK = 32
_ASYMPTOTIC_FROM = 256


class SeriesConvergenceError(RuntimeError):
    """The θ-series did not reach the requested tolerance within ``i_max`` terms."""


def sphere_volume(n: int) -> float:
    """Volume of the unit sphere S^{n-1} in R^n."""
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


def _upper_gamma(a: float, x: float) -> float:
    """Upper incomplete gamma Γ(a, x) for any real ``a`` and ``x > 0``."""
    if x > 60.0:
        # asymptotic series; only reached when the tail is negligible anyway
        acc, term = 1.0, 1.0
        for k in range(1, 8):
            term *= (a - k) / x
            acc += term
        return x ** (a - 1.0) * math.exp(-x) * acc
    if a > 0.0:
        return special.gamma(a) * special.gammaincc(a, x)
    if a == 0.0:
        return float(special.exp1(x))
    return (_upper_gamma(a + 1.0, x) - x**a * math.exp(-x)) / a


def _tail_integral(q: float, lam: float, u0: float) -> float:
    """∫_{u0}^∞ u^{-q} e^{-lam u} du."""
    if lam == 0.0:
        if q <= 1.0:
            return math.inf
        return u0 ** (1.0 - q) / (q - 1.0)
    return lam ** (q - 1.0) * _upper_gamma(1.0 - q, lam * u0)


def _bernoulli3(x):
    return x**3 - 1.5 * x**2 + 0.5 * x


def _bernoulli5(x):
    return x**5 - 2.5 * x**4 + (5.0 / 3.0) * x**3 - x / 6.0


def _monomial_tail(q: float, lam: float, u0: float) -> float:
    """Midpoint Euler-Maclaurin sum of F(u) = u^{-q} e^{-lam u} over u0+k, k >= 1/2."""
    f = u0 ** (-q) * math.exp(-lam * u0)
    a = q / u0 + lam
    d1 = -a * f
    d3 = -(a**3 + 3.0 * a * q / u0**2 + 2.0 * q / u0**3) * f
    return _tail_integral(q, lam, u0) + d1 / 24.0 - 7.0 * d3 / 5760.0


def _asymptotic_tails(n: int, lam: float, last: int, order: int) -> list[float]:
    """Approximate ``Σ_{i>last} (i-1)^k P_i z^{i-1}`` for ``k = 0..order``.

    With u = i + n/4 the coefficient ratio Γ(u + a)/Γ(u + 1 - a), a = (2-n)/4,
    has an expansion in even powers of 1/u:
    P_i = K u^{-n/2} (1 + c2/u^2 + c4/u^4 + O(u^{-6})).
    """
    p = n / 2.0
    sigma1 = n / 4.0 + 1.0
    a = (2.0 - n) / 4.0
    K = math.exp(math.lgamma((n + 3) / 2.0) - math.lgamma(1.5))
    c2 = -_bernoulli3(a) / 3.0
    c4 = 0.5 * c2**2 - _bernoulli5(a) / 10.0
    u0 = last + 0.5 + n / 4.0
    scale = K * math.exp(lam * sigma1)
    # (i - 1)^k = (u - sigma1)^k expanded in powers of u
    powers = ([(1.0, 0)], [(1.0, 1), (-sigma1, 0)],
              [(1.0, 2), (-2.0 * sigma1, 1), (sigma1**2, 0)])
    tails = []
    for k in range(order + 1):
        total = 0.0
        for c, q in ((1.0, p), (c2, p + 2.0), (c4, p + 4.0)):
            total += c * sum(b * _monomial_tail(q - j, lam, u0) for b, j in powers[k])
        tails.append(scale * total)
    return tails


def theta_moments(n: int, lam: float, order: int = 1, tol: float = 1e-13,
                  i_max: int = 2**22) -> tuple[list[float], float]:
    """Moments ``M_k = Σ (i-1)^k P_i z^{i-1}``, ``k = 0..order``, at ``z = exp(-lam)``.

    ``M_0`` is θ̃ and ``dM_k/dlam = -M_{k+1}``.  Returns the moments and the
    largest estimated relative error.
    """
    if n < 3:
        raise ValueError("dimension must be >= 3")
    if lam < 0.0:
        raise ValueError("t must be >= 1")
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    # M_k at lam = 0 is finite only for k < n/2 - 1
    if lam == 0.0 and order > 0 and order >= n / 2.0 - 1.0:
        raise ValueError(f"moment of order {order} diverges at t = 1 for n = {n}")
    z = math.exp(-lam)
    sums = [1.0] + [0.0] * order
    term = 1.0  # P_i z^{i-1} at i = last
    last = 1
    history = {}
    end = _FIRST_BLOCK
    while True:
        i = np.arange(last + 1, end + 1, dtype=float)
        ratios = z * (i - 0.5) / (i + 0.5 * (n - 1))
        terms = term * np.cumprod(ratios)
        weight = np.ones_like(i)
        for k in range(order + 1):
            sums[k] += math.fsum(weight * terms)
            weight = weight * (i - 1.0)
        term = float(terms[-1])
        last = end
        history[last] = list(sums)

        if z < 1.0:
            # geometric majorant of the remaining terms times (i-1)^k
            q = z / (1.0 - z)
            bounds = [term * q * (last + 1.0 / (1.0 - z)) ** k for k in range(order + 1)]
            rel = [b / max(abs(m), 1e-300) for b, m in zip(bounds, sums)]
            if max(rel) <= tol:
                return sums, max(rel)

        if last >= _ASYMPTOTIC_FROM:
            now = [m + t for m, t in zip(sums, _asymptotic_tails(n, lam, last, order))]
            half = [m + t for m, t in
                    zip(history[last // 2], _asymptotic_tails(n, lam, last // 2, order))]
            rel = [abs(a - b) / max(abs(a), 1e-300) for a, b in zip(now, half)]
            if max(rel) <= tol:
                return now, max(rel)

        if last >= i_max:
            raise SeriesConvergenceError(
                f"θ-series for n={n}, lam={lam:.3e} did not reach tol={tol:.1e} "
                f"within {i_max} terms")
        end = 2 * last


def theta_sums(n: int, lam: float, tol: float = 1e-13, i_max: int = 2**22,
               derivative: bool = True) -> tuple[float, float, float]:
    """Return ``(S0, S1, err)``: θ̃ and ``Σ (i-1) P_i z^{i-1}`` at ``z = exp(-lam)``.

    ``dθ̃/dt = -2 S1 / t``.  ``err`` is the estimated relative error.
    """
    m, err = theta_moments(n, lam, 1 if derivative else 0, tol, i_max)
    return m[0], (m[1] if derivative else 0.0), err


def theta_tilde(n: int, t: float, tol: float = 1e-13, i_max: int = 2**22) -> float:
    """The unnormalised series θ̃(t), ``t >= 1``."""
    if t < 1.0:
        raise ValueError(f"θ̃ requires t >= 1, got {t}")
    s0, _, _ = theta_sums(n, 2.0 * math.log(t), tol, i_max, derivative=False)
    return s0


def theta_terms(n: int, count: int) -> np.ndarray:
    """First ``count`` coefficients P_1, P_2, ... of θ̃ (value at t = 1)."""
    i = np.arange(2, count + 1, dtype=float)
    return np.concatenate([[1.0], np.cumprod(1.0 - n / (2.0 * i + n - 1.0))])


@dataclass(frozen=True)
class KernelTable:
    """Per-dimension constants of the kernel."""

    n: int
    theta0: float
    c_n: float
    tol: float
    i_max: int
    tail_error: float

    @property
    def limit_constant(self) -> float:
        """``lim cosh^n(s) G0(s) = c_n / θ̃(1)``."""
        return self.c_n / self.theta0


@lru_cache(maxsize=None)
def kernel_table(n: int, tol: float = 1e-13, i_max: int = 2**22) -> KernelTable:
    if n < 3:
        raise ValueError("dimension must be >= 3")
    s0, _, err = theta_sums(n, 0.0, tol, i_max, derivative=False)
    c_n = 1.0 / ((n - 2) * sphere_volume(n))
    return KernelTable(n=n, theta0=s0, c_n=c_n, tol=tol, i_max=i_max, tail_error=err)


def _lam_of_s(s: float) -> float:
    # -log(sech^2 s) = 2 log cosh s, written to keep precision as s -> 0
    return 2.0 * math.log1p(2.0 * math.sinh(0.5 * s) ** 2)


def _log_sinh(s: float) -> float:
    if s > 1.0:
        return s + math.log1p(-math.exp(-2.0 * s)) - math.log(2.0)
    return math.log(math.sinh(s))


def _log_cosh(s: float) -> float:
    return s + math.log1p(math.exp(-2.0 * s)) - math.log(2.0)


def _check_s(s):
    if not s > 0.0:
        raise ValueError(f"distance must be positive, got {s}")


def _green_scalar(table: KernelTable, s: float, derivative: bool):
    _check_s(s)
    n = table.n
    s0, s1, _ = theta_sums(n, _lam_of_s(s), table.tol, table.i_max, derivative=derivative)
    log_g = (math.log(table.c_n / table.theta0) + math.log(s0)
             - (n - 2) * _log_sinh(s) - 2.0 * _log_cosh(s))
    g = math.exp(log_g)
    if not derivative:
        return g, None
    # G'/G = -(n-2) coth s - 2 tanh s (1 + S1/S0)
    dlog = -(n - 2) / math.tanh(s) - 2.0 * math.tanh(s) * (1.0 + s1 / s0)
    return g, g * dlog


def _vectorize(fn, s):
    arr = np.asarray(s, dtype=float)
    if arr.ndim == 0:
        return fn(float(arr))
    return np.array([fn(float(v)) for v in arr.ravel()]).reshape(arr.shape)


def green0(table: KernelTable, s):
    """Kernel value at hyperbolic distance ``s > 0``."""
    return _vectorize(lambda v: _green_scalar(table, v, False)[0], s)


def green_prime(table: KernelTable, s):
    """Radial derivative dG0/ds."""
    return _vectorize(lambda v: _green_scalar(table, v, True)[1], s)


def green_log_derivative(table: KernelTable, s: float) -> float:
    """``G0'(s)/G0(s)``, the exact decaying-mode Robin coefficient."""
    g, dg = _green_scalar(table, float(s), True)
    return dg / g


def green_at(table: KernelTable, x, y) -> float:
    """``G_H(x, y)`` for two distinct hyperboloid points."""
    from .hyperboloid import distance

    d = distance(x, y)
    if d == 0.0:
        raise ValueError("kernel is singular at coincident points")
    return green0(table, d)


def green_second(table: KernelTable, s):
    """Second radial derivative, from the second moment of the series."""

    def one(v):
        _check_s(v)
        n = table.n
        m, _ = theta_moments(n, _lam_of_s(v), 2, table.tol, table.i_max)
        g = _green_scalar(table, v, False)[0]
        r1, r2 = m[1] / m[0], m[2] / m[0]
        th, cth = math.tanh(v), 1.0 / math.tanh(v)
        dl, ddl = 2.0 * th, 2.0 * (1.0 - th * th)  # lam'(s), lam''(s)
        first = -r1 * dl - (n - 2) * cth - 2.0 * th
        second = (dl * dl * (r2 - r1 * r1) - r1 * ddl
                  + (n - 2) / math.sinh(v) ** 2 - 2.0 * (1.0 - th * th))
        return g * (second + first * first)

    return _vectorize(one, s)


def ode_residual(table: KernelTable, s):
    """Radial residual ``-G'' - (n-1) coth(s) G' + n G``."""
    n = table.n

    def one(v):
        g, dg = _green_scalar(table, v, True)
        return -green_second(table, v) - (n - 1) / math.tanh(v) * dg + n * g

    return _vectorize(one, s)


def flux(table: KernelTable, s):
    """Outward flux ``-vol(S^{n-1}) sinh^{n-1}(s) G'(s)``; tends to 1 as s -> 0."""
    n = table.n
    vol = sphere_volume(n)

    def one(v):
        _, dg = _green_scalar(table, v, True)
        return -vol * math.sinh(v) ** (n - 1) * dg

    return _vectorize(one, s)


def dump_kernel_csv(table: KernelTable, s_values, path) -> None:
    """Write ``s,g,gprime,residual,flux`` rows with 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "g", "gprime", "residual", "flux"])
        for s in np.asarray(s_values, dtype=float):
            row = [s, green0(table, s), green_prime(table, s), ode_residual(table, s), flux(table, s)]
            w.writerow([f"{v:.17g}" for v in row])
