"""Lower convex hulls of planar point sets and piecewise integration.

The hull of a lower-bound curve is the central object of the analysis layer:
its negated derivative is the minimum-variance unbiased nonnegative estimate
for the underlying data vector, so hull slopes and their square integrals
drive both the optimal-variance baseline and the characterization checks.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
from scipy import integrate


@dataclass(frozen=True)
class LowerHull:
    """Vertices of the lower boundary of the convex hull of a point set,
    ordered by strictly increasing u with non-decreasing slopes."""

    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        vs = tuple((float(u), float(y)) for u, y in self.vertices)
        object.__setattr__(self, "vertices", vs)
        if len(vs) < 2:
            raise ValueError("a hull needs at least two vertices")
        us = [u for u, _ in vs]
        if any(b <= a for a, b in zip(us, us[1:])):
            raise ValueError("hull u-coordinates must strictly increase")
        slopes = self.slopes()
        if any(b < a - 1e-12 * max(1.0, abs(a)) for a, b in zip(slopes, slopes[1:])):
            raise ValueError("hull slopes must be non-decreasing")

    def slopes(self) -> tuple[float, ...]:
        vs = self.vertices
        return tuple(
            (y2 - y1) / (u2 - u1) for (u1, y1), (u2, y2) in zip(vs, vs[1:])
        )

    def value(self, x):
        """Piecewise-linear interpolation along the hull (clamped outside)."""
        us = np.array([u for u, _ in self.vertices])
        ys = np.array([y for _, y in self.vertices])
        out = np.interp(x, us, ys)
        return float(out) if np.isscalar(x) or np.ndim(x) == 0 else out


def _cross(o: tuple[float, float], a: tuple[float, float], b: tuple[float, float]) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (b[0] - o[0]) * (a[1] - o[1])


def lower_hull(points: Iterable[tuple[float, float]]) -> LowerHull:
    """Monotone-chain lower hull.

    Duplicate u-coordinates keep their minimum value first; collinear interior
    points are dropped, so every input point lies on or above the returned
    chain.  Requires at least two distinct u values.
    """
    best: dict[float, float] = {}
    for u, y in points:
        u = float(u)
        y = float(y)
        if u not in best or y < best[u]:
            best[u] = y
    if len(best) < 2:
        raise ValueError("need at least two points with distinct u")
    pts = sorted(best.items())
    chain: list[tuple[float, float]] = []
    for p in pts:
        while len(chain) >= 2 and _cross(chain[-2], chain[-1], p) <= 0.0:
            chain.pop()
        chain.append(p)
    return LowerHull(tuple(chain))


@dataclass(frozen=True)
class EstimatePiece:
    """Constant or callable estimate over the seed interval ``(lo, hi]``."""

    lo: float
    hi: float
    value: float | Callable[[float], float]

    def __post_init__(self):
        if not (0.0 <= self.lo < self.hi <= 1.0):
            raise ValueError(f"bad piece interval ({self.lo}, {self.hi}]")
        if isinstance(self.value, (int, float)) and self.value < 0:
            raise ValueError("estimates must be nonnegative")


@dataclass(frozen=True)
class EstimateFn:
    """Piecewise estimator values over seeds, tagged by construction kind."""

    kind: str  # "j_dyadic", "v_optimal", or "ht"
    pieces: tuple[EstimatePiece, ...]

    def __post_init__(self):
        for a, b in zip(self.pieces, self.pieces[1:]):
            if b.lo != a.hi:
                raise ValueError("pieces must be contiguous and ordered")

    @property
    def support_left(self) -> float:
        return self.pieces[0].lo if self.pieces else 1.0

    def value_at(self, u: float) -> float:
        if not self.pieces or u <= self.support_left or u > self.pieces[-1].hi:
            return 0.0
        his = [p.hi for p in self.pieces]
        idx = bisect_left(his, u)
        p = self.pieces[idx]
        return float(p.value(u)) if callable(p.value) else float(p.value)

    def integral(self, lo: float = 0.0, hi: float = 1.0) -> float:
        total = 0.0
        for p in self.pieces:
            a, b = max(p.lo, lo), min(p.hi, hi)
            if b <= a:
                continue
            if callable(p.value):
                val, _ = integrate.quad(p.value, a, b, epsabs=1e-9, epsrel=1e-9)
                total += val
            else:
                total += p.value * (b - a)
        return total


def integrate_square(e: EstimateFn, lo: float = 0.0, hi: float = 1.0) -> float:
    """Integral of the squared estimate over ``(lo, hi]``.

    Exact for constant pieces; callable pieces use adaptive quadrature at
    1e-9 tolerance.  Any infinite piece value makes the result infinite.
    Divergence below the materialised support is the business of the
    refinement checks in :mod:`coordest.analysis`, not of this sum.
    """
    total = 0.0
    for p in e.pieces:
        a, b = max(p.lo, lo), min(p.hi, hi)
        if b <= a:
            continue
        if callable(p.value):
            val, _ = integrate.quad(lambda x: p.value(x) ** 2, a, b, epsabs=1e-9, epsrel=1e-9)
            total += val
        else:
            if math.isinf(p.value):
                return math.inf
            total += p.value * p.value * (b - a)
    return total
