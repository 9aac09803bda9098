"""Item functions and their tightest lower bounds over sampling outcomes.

An item function maps the value tuple of one item across instances to a
nonnegative number.  Given an outcome observed at seed ``rho``, the
information available at any seed ``x >= rho`` confines each coordinate to an
interval: a point for entries still above threshold at ``x``, and
``[domain_low, tau_i(x))`` otherwise.  The lower bound of the function at
``x`` is its infimum over that box.  Because the built-in functions are
continuous, the infimum over the half-open box equals the minimum over its
closure, which each built-in admits in closed form:

* ``max``            -> ``max_i l_i``
* ``min``            -> ``min_i l_i``
* ``or``             -> 1 if some ``l_i > 0`` else 0
* ``rg`` (range^p)   -> ``max(0, max_i l_i - min_i h_i)^p``
* ``one_sided_rg``   -> ``max(0, l_hi - h_lo)^p``

where ``[l_i, h_i]`` is coordinate ``i``'s interval.  The range form follows
from the fact that the spread of any point in a box is at least
``max_i l_i - min_i h_i`` and that value is attained by clamping every free
coordinate onto the same level.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .model import Domain, Known, Outcome, PiecewiseLinearMap, PpsMap, TauScheme

MAX = "max"
MIN = "min"
RG = "rg"
ONE_SIDED_RG = "one_sided_rg"
OR = "or"

_KINDS = (MAX, MIN, RG, ONE_SIDED_RG, OR)


@dataclass(frozen=True)
class ItemFunction:
    """A nonnegative function of one item's value tuple.

    ``p`` is the exponent for the range kinds; ``direction`` is the ordered
    (hi, lo) coordinate pair for the one-sided range.
    """

    kind: str
    arity: int
    p: float | None = None
    direction: tuple[int, int] | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown item function kind {self.kind!r}")
        if self.arity < 1:
            raise ValueError("arity must be at least 1")
        if self.kind in (RG, ONE_SIDED_RG):
            if self.p is None or self.p <= 0:
                raise ValueError(f"{self.kind} requires a positive exponent p")
        if self.kind == ONE_SIDED_RG:
            if self.direction is None:
                raise ValueError("one_sided_rg requires a (hi, lo) direction")
            hi, lo = self.direction
            if hi == lo or not (0 <= hi < self.arity and 0 <= lo < self.arity):
                raise ValueError(f"bad direction {self.direction} for arity {self.arity}")

    def describe(self) -> str:
        if self.kind == RG:
            return f"rg:p={self.p:g}"
        if self.kind == ONE_SIDED_RG:
            hi, lo = self.direction
            return f"one_sided_rg:p={self.p:g},hi={hi + 1},lo={lo + 1}"
        return self.kind


def max_fn(arity: int) -> ItemFunction:
    return ItemFunction(MAX, arity)


def min_fn(arity: int) -> ItemFunction:
    return ItemFunction(MIN, arity)


def or_fn(arity: int) -> ItemFunction:
    return ItemFunction(OR, arity)


def rg_fn(p: float, arity: int) -> ItemFunction:
    return ItemFunction(RG, arity, p=float(p))


def one_sided_rg_fn(p: float, hi: int, lo: int, arity: int) -> ItemFunction:
    return ItemFunction(ONE_SIDED_RG, arity, p=float(p), direction=(hi, lo))


def parse_function(spec: str, arity: int) -> ItemFunction:
    """Parse a CLI function spec such as ``max`` or ``rg:p=2`` or
    ``one_sided_rg:p=2,hi=1,lo=2`` (hi/lo are 1-based instance numbers)."""
    name, _, argstr = spec.partition(":")
    name = name.strip().lower()
    args = {}
    if argstr:
        for part in argstr.split(","):
            k, _, v = part.partition("=")
            args[k.strip()] = v.strip()
    if name == "max":
        return max_fn(arity)
    if name == "min":
        return min_fn(arity)
    if name == "or":
        return or_fn(arity)
    if name == "rg":
        return rg_fn(float(args.get("p", 1)), arity)
    if name in ("one_sided_rg", "osrg"):
        hi = int(args.get("hi", 1)) - 1
        lo = int(args.get("lo", 2)) - 1
        return one_sided_rg_fn(float(args.get("p", 1)), hi, lo, arity)
    raise ValueError(f"unknown function spec {spec!r}")


def evaluate(f: ItemFunction, v: Sequence[float]) -> float:
    """Exact function value at a data vector."""
    if len(v) != f.arity:
        raise ValueError(f"vector arity {len(v)} != function arity {f.arity}")
    if f.kind == MAX:
        return float(max(v))
    if f.kind == MIN:
        return float(min(v))
    if f.kind == OR:
        return 1.0 if any(x > 0 for x in v) else 0.0
    if f.kind == RG:
        return float(abs(max(v) - min(v)) ** f.p)
    hi, lo = f.direction
    return float(max(v[hi] - v[lo], 0.0) ** f.p)


def evaluate_many(f: ItemFunction, z: np.ndarray) -> np.ndarray:
    """Vectorised :func:`evaluate` over the rows of an (m, arity) array."""
    z = np.asarray(z, dtype=float)
    if f.kind == MAX:
        return z.max(axis=1)
    if f.kind == MIN:
        return z.min(axis=1)
    if f.kind == OR:
        return (z > 0).any(axis=1).astype(float)
    if f.kind == RG:
        return np.abs(z.max(axis=1) - z.min(axis=1)) ** f.p
    hi, lo = f.direction
    return np.clip(z[:, hi] - z[:, lo], 0.0, None) ** f.p


# ---------------------------------------------------------------------------
# interval boxes and closed-form infima


def _lb_from_bounds(f: ItemFunction, lows: np.ndarray, highs: np.ndarray) -> np.ndarray:
    """Closed-form infimum per column of stacked (arity, n) interval bounds."""
    if f.kind == MAX:
        return lows.max(axis=0)
    if f.kind == MIN:
        return lows.min(axis=0)
    if f.kind == OR:
        return (lows > 0).any(axis=0).astype(float)
    if f.kind == RG:
        return np.clip(lows.max(axis=0) - highs.min(axis=0), 0.0, None) ** f.p
    hi, lo = f.direction
    return np.clip(lows[hi] - highs[lo], 0.0, None) ** f.p


def _outcome_bounds(outcome: Outcome, xs: np.ndarray, domain: Domain) -> tuple[np.ndarray, np.ndarray]:
    """Coordinate intervals implied by the outcome's information at seeds
    ``xs``; entries whose value drops below threshold at a larger seed revert
    to unknown there."""
    r = outcome.r
    n = xs.shape[0]
    lows = np.empty((r, n))
    highs = np.empty((r, n))
    for i, slot in enumerate(outcome.slots):
        taus = np.asarray(outcome.scheme.maps[i].value(xs), dtype=float)
        lo = domain.lows[i]
        if isinstance(slot, Known):
            known = slot.value >= taus
            lows[i] = np.where(known, slot.value, lo)
            highs[i] = np.where(known, slot.value, taus)
        else:
            lows[i] = lo
            highs[i] = taus
    return lows, highs


def _vector_bounds(v: Sequence[float], scheme: TauScheme, xs: np.ndarray, domain: Domain) -> tuple[np.ndarray, np.ndarray]:
    """Same as :func:`_outcome_bounds` but derived directly from a full data
    vector; this is the curve a sweeping analysis sees at every seed."""
    r = len(v)
    n = xs.shape[0]
    lows = np.empty((r, n))
    highs = np.empty((r, n))
    for i, vi in enumerate(v):
        taus = np.asarray(scheme.maps[i].value(xs), dtype=float)
        lo = domain.lows[i]
        known = vi >= taus
        lows[i] = np.where(known, vi, lo)
        highs[i] = np.where(known, vi, taus)
    return lows, highs


def lower_bound(f: ItemFunction, outcome: Outcome, x: float, domain: Domain | None = None) -> float:
    """Infimum of ``f`` over every data vector consistent with the outcome's
    information at seed ``x``.

    Only defined for ``x`` at or above the observed seed: smaller seeds would
    have revealed strictly more than the outcome records.
    """
    if x < outcome.seed:
        raise ValueError(f"x={x} below outcome seed {outcome.seed}")
    if x > 1.0:
        raise ValueError("seeds beyond 1 carry no information; use domain_infimum")
    domain = domain if domain is not None else outcome.scheme.domain
    xs = np.array([x], dtype=float)
    lows, highs = _outcome_bounds(outcome, xs, domain)
    return float(_lb_from_bounds(f, lows, highs)[0])


def lower_bound_from_vector(
    f: ItemFunction, v: Sequence[float], scheme: TauScheme, x, domain: Domain | None = None
):
    """Lower-bound value(s) at seed(s) ``x`` for the outcome a given data
    vector would produce; accepts a scalar or an array of seeds."""
    domain = domain if domain is not None else scheme.domain
    scalar = np.isscalar(x) or np.ndim(x) == 0
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    lows, highs = _vector_bounds(v, scheme, xs, domain)
    out = _lb_from_bounds(f, lows, highs)
    return float(out[0]) if scalar else out


def domain_infimum(f: ItemFunction, domain: Domain) -> float:
    """Infimum of ``f`` over the whole declared domain (an outcome that
    reveals nothing constrains the data no further than this)."""
    lows = np.array(domain.lows, dtype=float).reshape(-1, 1)
    highs = np.full_like(lows, np.inf)
    return float(_lb_from_bounds(f, lows, highs)[0])


def brute_force_lower_bound(
    f: ItemFunction,
    outcome: Outcome,
    x: float,
    grid_n: int = 64,
    domain: Domain | None = None,
) -> float:
    """Grid-search oracle for :func:`lower_bound`.

    Free coordinates are swept over ``grid_n`` points spanning
    ``[domain_low, tau_i(x) - delta]`` with ``delta`` one grid step, honouring
    the strict upper bound; fixed coordinates stay at their revealed value.
    Converges to the closed form as ``grid_n`` grows.
    """
    if x < outcome.seed:
        raise ValueError(f"x={x} below outcome seed {outcome.seed}")
    if grid_n < 2:
        raise ValueError("grid_n must be at least 2")
    domain = domain if domain is not None else outcome.scheme.domain
    axes = []
    for i, slot in enumerate(outcome.slots):
        tau_x = float(outcome.scheme.maps[i].value(x))
        if isinstance(slot, Known) and slot.value >= tau_x:
            axes.append(np.array([slot.value]))
        else:
            lo = domain.lows[i]
            if not math.isfinite(tau_x):
                raise ValueError("cannot grid an unbounded coordinate")
            delta = (tau_x - lo) / grid_n
            axes.append(np.linspace(lo, tau_x - delta, grid_n))
    grids = np.meshgrid(*axes, indexing="ij")
    z = np.stack([g.ravel() for g in grids], axis=1)
    return float(evaluate_many(f, z).min())


# ---------------------------------------------------------------------------
# piecewise representation of the lower bound as a function of the seed


@dataclass(frozen=True)
class LowerBoundFn:
    """Piecewise view of ``x -> lower bound at x``.

    ``breakpoints`` ascend and end at 1; piece ``k`` covers
    ``(breakpoints[k-1], breakpoints[k]]`` (the first piece starts at
    ``domain_left``).  The function is non-increasing and left-continuous;
    ``piece_constant[k]`` flags pieces that are exactly flat.
    """

    breakpoints: tuple[float, ...]
    domain_left: float
    value_fn: Callable[[np.ndarray], np.ndarray]
    piece_constant: tuple[bool, ...]

    def value(self, x):
        scalar = np.isscalar(x) or np.ndim(x) == 0
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.asarray(self.value_fn(xs), dtype=float)
        return float(out[0]) if scalar else out

    def limit_left(self, eps: float = 1e-12) -> float:
        """Value just right of the left edge; for a full curve this is the
        limit toward seed 0, which equals f(v) exactly when the function is
        estimable."""
        return self.value(self.domain_left + eps)

    def constant_head(self) -> float | None:
        """Value of the leftmost piece if it is exactly constant."""
        if self.piece_constant and self.piece_constant[0]:
            return self.value((self.domain_left + self.breakpoints[0]) / 2.0
                              if self.breakpoints[0] > self.domain_left
                              else self.breakpoints[0])
        return None

    @staticmethod
    def from_callable(
        fn: Callable[[np.ndarray], np.ndarray],
        breakpoints: Sequence[float] = (1.0,),
        domain_left: float = 0.0,
    ) -> "LowerBoundFn":
        bps = tuple(sorted(set(float(b) for b in breakpoints) | {1.0}))
        flags = _classify_pieces(fn, bps, domain_left)
        return LowerBoundFn(bps, float(domain_left), fn, flags)


def _classify_pieces(value_fn, breakpoints, domain_left) -> tuple[bool, ...]:
    flags = []
    left = domain_left
    for right in breakpoints:
        if right <= left:
            flags.append(True)
            left = right
            continue
        span = right - left
        probes = np.array([left + 0.25 * span, left + 0.5 * span, left + 0.75 * span])
        vals = np.asarray(value_fn(probes), dtype=float)
        flags.append(bool(vals[0] == vals[1] == vals[2]))
        left = right
    return tuple(flags)


def _scheme_breakpoints(scheme: TauScheme, levels: Sequence[float], left: float) -> set[float]:
    """Candidate seeds where any map crosses a fixed level, plus joints and
    pairwise intersections of piecewise-linear maps."""
    pts: set[float] = set()
    for m in scheme.maps:
        for lvl in levels:
            pts.update(m.crossings(lvl))
        pts.update(m.joints())
    pwl = [m for m in scheme.maps if isinstance(m, PiecewiseLinearMap)]
    for a, b in itertools.combinations(pwl, 2):
        # crossings of two piecewise-linear maps: compare on merged joints
        us = sorted({0.0, 1.0, *a.joints(), *b.joints()})
        for ua, ub in zip(us, us[1:]):
            fa, fb = a.value(ua) - b.value(ua), a.value(ub) - b.value(ub)
            if fa == 0.0:
                pts.add(ua)
            if fa * fb < 0.0:
                t = fa / (fa - fb)
                pts.add(ua + t * (ub - ua))
    if pwl and any(isinstance(m, PpsMap) for m in scheme.maps):
        for a in pwl:
            for b in scheme.maps:
                if isinstance(b, PpsMap):
                    us = sorted({0.0, 1.0, *a.joints()})
                    for ua, ub in zip(us, us[1:]):
                        fa = a.value(ua) - b.value(ua)
                        fb = a.value(ub) - b.value(ub)
                        if fa == 0.0 and ua > 0.0:
                            pts.add(ua)
                        if fa * fb < 0.0:
                            t = fa / (fa - fb)
                            pts.add(ua + t * (ub - ua))
    return {p for p in pts if left < p < 1.0}


def lb_breakpoints(f: ItemFunction, outcome: Outcome, domain: Domain | None = None) -> LowerBoundFn:
    """Piecewise lower-bound representation for an outcome, valid on
    ``[outcome.seed, 1]``.

    Breakpoints are the seeds where a revealed value crosses its own
    threshold map or any other map (the points where the closed forms switch
    branch), together with joints of piecewise-linear maps.
    """
    domain = domain if domain is not None else outcome.scheme.domain
    levels = {slot.value for slot in outcome.slots if isinstance(slot, Known)}
    levels.update(domain.lows)
    pts = _scheme_breakpoints(outcome.scheme, sorted(levels), outcome.seed)
    bps = tuple(sorted(pts | {1.0}))

    def value_fn(xs: np.ndarray) -> np.ndarray:
        lows, highs = _outcome_bounds(outcome, np.asarray(xs, dtype=float), domain)
        return _lb_from_bounds(f, lows, highs)

    flags = _classify_pieces(value_fn, bps, outcome.seed)
    return LowerBoundFn(bps, outcome.seed, value_fn, flags)


def lb_function(
    f: ItemFunction, v: Sequence[float], scheme: TauScheme, domain: Domain | None = None
) -> LowerBoundFn:
    """Full lower-bound curve for a data vector, valid on all of (0, 1]."""
    domain = domain if domain is not None else scheme.domain
    if len(v) != scheme.r:
        raise ValueError("vector arity does not match scheme")
    levels = set(float(x) for x in v)
    levels.update(domain.lows)
    pts = _scheme_breakpoints(scheme, sorted(levels), 0.0)
    bps = tuple(sorted(pts | {1.0}))

    def value_fn(xs: np.ndarray) -> np.ndarray:
        lows, highs = _vector_bounds(v, scheme, np.asarray(xs, dtype=float), domain)
        return _lb_from_bounds(f, lows, highs)

    flags = _classify_pieces(value_fn, bps, 0.0)
    return LowerBoundFn(bps, 0.0, value_fn, flags)
