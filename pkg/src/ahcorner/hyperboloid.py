"""Hyperboloid and ball models of hyperbolic space.

Points live on the upper sheet ``-t^2 + |x|^2 = -1`` of Minkowski space;
the Poincaré ball is used only as a chart.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

QUADRIC_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class HyperboloidPoint:
    """A point ``(t, x)`` on the upper hyperboloid."""

    t: float
    x: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(-1)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", float(self.t))
        if self.t < 1.0 - QUADRIC_TOL:
            raise ValueError(f"t must be >= 1, got {self.t}")
        defect = -self.t**2 + x @ x + 1.0
        if abs(defect) > QUADRIC_TOL * max(1.0, self.t**2):
            raise ValueError(f"point is off the quadric (defect {defect:.3e})")

    @classmethod
    def from_spatial(cls, x) -> "HyperboloidPoint":
        """Lift a spatial vector, recomputing ``t = sqrt(1 + |x|^2)``."""
        x = np.asarray(x, dtype=float).reshape(-1)
        return cls(np.sqrt(1.0 + x @ x), x)

    @property
    def n(self) -> int:
        return self.x.size

    def __neg__(self) -> "HyperboloidPoint":
        # point with spatial part -x (the reflection used in |T_b(x)| = sinh d(x, -b))
        return HyperboloidPoint(self.t, -self.x)


@dataclass(frozen=True, eq=False)
class BallPoint:
    """A point of the open unit ball (Poincaré model)."""

    x: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(-1)
        object.__setattr__(self, "x", x)
        if not x @ x < 1.0:
            raise ValueError(f"ball point must satisfy |x| < 1, got |x| = {np.sqrt(x @ x)}")


def origin(n: int) -> HyperboloidPoint:
    return HyperboloidPoint(1.0, np.zeros(n))


def lift(b: BallPoint) -> HyperboloidPoint:
    """Ball model -> hyperboloid: ``x = 2b/(1-|b|^2)``, ``t = (1+|b|^2)/(1-|b|^2)``."""
    if not isinstance(b, BallPoint):
        b = BallPoint(b)
    r2 = b.x @ b.x
    x = 2.0 * b.x / (1.0 - r2)
    return HyperboloidPoint.from_spatial(x)


def project(p: HyperboloidPoint) -> BallPoint:
    """Hyperboloid -> ball model: ``x/(1+t)``."""
    return BallPoint(p.x / (1.0 + p.t))


def translate(b, p: HyperboloidPoint) -> HyperboloidPoint:
    """Hyperbolic translation ``T_b(x) = x + t_x b + (x·b)/(1+t_b) b``.

    ``b`` is the spatial part of the image of the origin; it may be given as
    a vector or a :class:`HyperboloidPoint`.  The time coordinate of the
    result is recomputed from its spatial part.
    """
    b = b.x if isinstance(b, HyperboloidPoint) else np.asarray(b, dtype=float).reshape(-1)
    t_b = np.sqrt(1.0 + b @ b)
    y = p.x + p.t * b + (p.x @ b) / (1.0 + t_b) * b
    return HyperboloidPoint.from_spatial(y)


def distance(p: HyperboloidPoint, q: HyperboloidPoint) -> float:
    """Hyperbolic distance, ``cosh d = t_p t_q - p·q``.

    Evaluated through the Minkowski chord ``|P - Q|^2 = 4 sinh^2(d/2)``,
    which equals ``2(cosh d - 1)`` but keeps full relative precision for
    short distances and never forms ``cosh d`` for long ones.
    """
    dx = p.x - q.x
    dt = p.t - q.t
    chord2 = dx @ dx - dt * dt
    if chord2 < 0.0:
        scale = max(1.0, p.t * q.t)
        if chord2 < -2.0 * QUADRIC_TOL * scale:
            raise ValueError(f"cosh d below 1 by more than rounding ({chord2:.3e})")
        chord2 = 0.0
    return 2.0 * np.arcsinh(0.5 * np.sqrt(chord2))


def cosh_distance(p: HyperboloidPoint, q: HyperboloidPoint) -> float:
    return max(1.0, p.t * q.t - p.x @ q.x)


def ball_translate(b: BallPoint, x: BallPoint) -> BallPoint:
    """Möbius translation of the ball sending 0 to ``b``."""
    if not isinstance(b, BallPoint):
        b = BallPoint(b)
    if not isinstance(x, BallPoint):
        x = BallPoint(x)
    bb = b.x @ b.x
    xx = x.x @ x.x
    xb = x.x @ b.x
    den = xx * bb + 2.0 * xb + 1.0
    y = ((1.0 - bb) * x.x + (xx + 2.0 * xb + 1.0) * b.x) / den
    return BallPoint(y)


def random_points(rng: np.random.Generator, n: int, size: int, scale: float = 2.0):
    """Random hyperboloid points with spatial parts ~ N(0, scale^2)."""
    return [HyperboloidPoint.from_spatial(rng.normal(scale=scale, size=n)) for _ in range(size)]
