"""Per-item estimators and multi-instance query aggregation.

Three unbiased nonnegative per-item estimators are provided:

* the dyadic estimator: constant on each seed interval ``(2^-j-1, 2^-j]``,
  built so that its cumulative integral from ``2^-j`` to 1 always equals the
  lower bound at ``2^-j+1``.  Evaluating it needs only the outcome: with
  ``i = floor(-log2 seed)`` the estimate is
  ``2^(i+1) * (lb(2^-i) - lb(2^-i+1))`` where the subtrahend is 0 when i = 0.
* inverse-probability (Horvitz-Thompson): ``f(v)/p`` whenever the outcome
  certifies the function value and its revelation probability, else 0.
* hull-derivative estimates: the negated slope of the lower convex hull of a
  full lower-bound curve; minimum variance for that curve's data vector, and
  the baseline competitiveness is measured against.

Query answers over many items are sums of per-item estimates; ratio queries
(Jaccard) and roots (Lp from Lp^p) are derived from the sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .functions import (
    ItemFunction,
    LowerBoundFn,
    evaluate,
    lb_function,
    lower_bound,
    lower_bound_from_vector,
    max_fn,
    min_fn,
    or_fn,
    rg_fn,
)
from .hull import EstimateFn, EstimatePiece, lower_hull
from .model import Domain, InstanceSet, Known, Outcome, TauScheme, Unknown, seeds_for_salts
from .samplers import (
    BottomKSample,
    PPS_RANK_KIND,
    inclusion_probability,
    sample_item,
)

HULL_LEFT_ANCHOR = 1e-12


def dyadic_index(rho: float) -> int:
    """Index i with ``rho`` in ``(2^-i-1, 2^-i]``."""
    if not 0.0 < rho <= 1.0:
        raise ValueError(f"seed must lie in (0, 1], got {rho}")
    return int(math.floor(-math.log2(rho)))


def j_estimate(outcome: Outcome, f: ItemFunction, domain: Domain | None = None) -> float:
    """Dyadic estimate computed from the outcome alone.

    Identical for every data vector consistent with the outcome, since the
    lower bound at seeds above the observed one is outcome-determined.
    """
    i = dyadic_index(outcome.seed)
    hi = 2.0 ** (-i)
    head = lower_bound(f, outcome, hi, domain=domain)
    prev = 0.0 if i == 0 else lower_bound(f, outcome, 2.0 ** (-i + 1), domain=domain)
    return max(0.0, 2.0 ** (i + 1) * (head - prev))


def j_cumulative(
    v: Sequence[float],
    rho: float,
    f: ItemFunction,
    scheme: TauScheme,
    depth: int = 60,
    domain: Domain | None = None,
) -> float:
    """Integral of the dyadic estimator over seeds in ``(rho, 1]`` for data
    ``v``, summed piece by piece.

    At ``rho = 2^-j`` this telescopes to the lower bound at ``2^-j+1`` up to
    float rounding, which is the construction's defining invariant.
    """
    i_last = dyadic_index(rho)
    if depth < i_last:
        raise ValueError(f"depth {depth} too shallow for rho={rho}")
    total = 0.0
    cum = 0.0  # integral over (2^-j, 1] after j full pieces
    for j in range(i_last + 1):
        hi = 2.0 ** (-j)
        if hi <= rho:
            break
        value = max(0.0, 2.0 ** (j + 1) * (lower_bound_from_vector(f, v, scheme, hi, domain) - cum))
        width = hi - max(rho, hi / 2.0)
        total += value * width
        cum += value * (hi / 2.0)
    return total


def j_piece_values(
    v: Sequence[float],
    f: ItemFunction,
    scheme: TauScheme,
    depth: int,
    domain: Domain | None = None,
) -> np.ndarray:
    """Constant dyadic values ``values[j]`` on ``(2^-j-1, 2^-j]`` for
    ``j = 0..depth``."""
    xs = 2.0 ** -np.arange(depth + 1, dtype=float)
    lbs = lower_bound_from_vector(f, v, scheme, xs, domain)
    vals = np.empty(depth + 1)
    vals[0] = 2.0 * lbs[0]
    vals[1:] = 2.0 ** (np.arange(1, depth + 1) + 1) * (lbs[1:] - lbs[:-1])
    return np.clip(vals, 0.0, None)


def j_estimate_fn(
    v: Sequence[float],
    f: ItemFunction,
    scheme: TauScheme,
    depth: int = 40,
    domain: Domain | None = None,
) -> EstimateFn:
    """Materialised dyadic pieces down to seed ``2^-depth-1``."""
    vals = j_piece_values(v, f, scheme, depth, domain)
    pieces = [
        EstimatePiece(2.0 ** (-j - 1), 2.0 ** (-j), float(vals[j]))
        for j in range(depth, -1, -1)
    ]
    return EstimateFn("j_dyadic", tuple(pieces))


# ---------------------------------------------------------------------------
# inverse-probability estimates


def _common_pps_tau(scheme: TauScheme) -> float:
    tau = scheme.common_pps_tau()
    if tau is None:
        raise ValueError("inverse-probability estimates need a common PPS threshold")
    return tau


def ht_estimate(outcome: Outcome, f: ItemFunction) -> float:
    """Inverse-probability estimate when the outcome certifies the function
    value; 0 otherwise.

    For max (and the presence indicator) the value is certified once some
    entry is revealed and every unrevealed bound sits at or below the largest
    revealed value ``m``; the revelation probability is then
    ``min(1, m/tau*)``.  For min the certifying event is all entries
    revealed, with probability ``min_i min(1, v_i/tau*)``.
    """
    tau_star = _common_pps_tau(outcome.scheme)
    if f.kind in ("max", "or"):
        known = [s.value for s in outcome.slots if isinstance(s, Known)]
        if not known:
            return 0.0
        m = max(known)
        if any(s.bound > m for s in outcome.slots if isinstance(s, Unknown)):
            return 0.0
        p = min(1.0, m / tau_star)
        return (m if f.kind == "max" else 1.0) / p
    if f.kind == "min":
        if not all(isinstance(s, Known) for s in outcome.slots):
            return 0.0
        values = [s.value for s in outcome.slots]
        p = min(min(1.0, x / tau_star) for x in values)
        return min(values) / p
    raise ValueError(f"inverse-probability estimation not applicable to {f.kind!r}")


def ht_estimate_fn(v: Sequence[float], f: ItemFunction, scheme: TauScheme) -> EstimateFn:
    """Inverse-probability estimates as a function of the seed for data
    ``v``: a single constant block on the certifying seeds."""
    tau_star = _common_pps_tau(scheme)
    fv = evaluate(f, v)
    if fv == 0.0:
        return EstimateFn("ht", (EstimatePiece(0.0, 1.0, 0.0),))
    if f.kind in ("max", "or"):
        p = min(1.0, max(v) / tau_star)
    elif f.kind == "min":
        p = min(min(1.0, x / tau_star) for x in v)
    else:
        raise ValueError(f"inverse-probability estimation not applicable to {f.kind!r}")
    pieces = [EstimatePiece(0.0, p, fv / p)]
    if p < 1.0:
        pieces.append(EstimatePiece(p, 1.0, 0.0))
    return EstimateFn("ht", tuple(pieces))


# ---------------------------------------------------------------------------
# hull-derivative (minimum-variance) estimates


def v_optimal_estimates(lb: LowerBoundFn, grid_n: int = 512) -> EstimateFn:
    """Piecewise-constant negated slopes of the lower hull of a full
    lower-bound curve.

    The hull is taken over the curve sampled on a uniform-plus-geometric
    grid with every breakpoint inserted, a left anchor just right of 0
    carrying the curve's limit value, and the point ``(1, 0)``: the
    cumulative estimate must vanish at seed 1, and anchoring the hull there
    is what lets data that is revealed with certainty keep its full mass.
    """
    if grid_n < 2:
        raise ValueError("grid_n must be at least 2")
    if lb.domain_left > HULL_LEFT_ANCHOR:
        raise ValueError("need a lower-bound curve valid on all of (0, 1]")
    # all the action sits at small seeds, and a curve whose first breakpoint
    # is tiny (values revealed only with tiny probability) keeps its mass
    # below the default anchor; scale the anchor under the first breakpoint
    min_bp = min((b for b in lb.breakpoints if b > 0.0), default=1.0)
    anchor = min(HULL_LEFT_ANCHOR, 1e-3 * min_bp)
    decades = math.log10(1.0 / anchor)
    us = np.unique(
        np.concatenate(
            [
                np.linspace(1.0 / grid_n, 1.0, grid_n),
                np.geomspace(anchor, 1.0, int(max(grid_n, 128, 12 * decades))),
                np.array(lb.breakpoints, dtype=float),
            ]
        )
    )
    us = us[(us > anchor) & (us <= 1.0)]
    points = [(anchor, lb.value(anchor))]
    points.extend(zip(us.tolist(), np.asarray(lb.value(us), dtype=float).tolist()))
    # The curve is left-continuous and may jump down across a breakpoint; the
    # cumulative estimate is continuous and capped at every seed beyond the
    # jump as well, so the binding value AT a breakpoint is the right limit.
    for b in lb.breakpoints:
        if b < 1.0:
            points.append((b, lb.value(np.nextafter(b, np.inf))))
    points.append((1.0, 0.0))
    hull = lower_hull(points)
    pieces = []
    for (u1, y1), (u2, y2) in zip(hull.vertices, hull.vertices[1:]):
        pieces.append(EstimatePiece(u1, u2, max(0.0, (y1 - y2) / (u2 - u1))))
    return EstimateFn("v_optimal", tuple(pieces))


def v_optimal_estimate_at(
    v: Sequence[float],
    f: ItemFunction,
    scheme: TauScheme,
    u: float,
    grid_n: int = 512,
    domain: Domain | None = None,
) -> float:
    """Oracle estimate at one seed; needs the true data vector."""
    est = v_optimal_estimates(lb_function(f, v, scheme, domain), grid_n)
    return est.value_at(u)


# ---------------------------------------------------------------------------
# query aggregation


L1 = "l1"
LPP = "lpp"
LP = "lp"
MAX_SUM = "maxsum"
MIN_SUM = "minsum"
JACCARD = "jaccard"
DISTINCT = "distinct"

QUERY_KINDS = (L1, LPP, LP, MAX_SUM, MIN_SUM, JACCARD, DISTINCT)


@dataclass(frozen=True)
class QueryResult:
    query: str
    value: float
    per_item: tuple[tuple[str, float], ...]
    subset: str
    extras: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("query estimates are nonnegative by construction")

    def extras_dict(self) -> dict[str, float]:
        return dict(self.extras)

    def to_dict(self) -> dict:
        return {
            "query": self.query,
            "value": self.value,
            "per_item": [[i, c] for i, c in self.per_item],
            "subset": self.subset,
            "extras": [[k, v] for k, v in self.extras],
        }

    @staticmethod
    def from_dict(d: Mapping) -> "QueryResult":
        return QueryResult(
            query=str(d["query"]),
            value=float(d["value"]),
            per_item=tuple((str(i), float(c)) for i, c in d.get("per_item", [])),
            subset=str(d.get("subset", "all")),
            extras=tuple((str(k), float(v)) for k, v in d.get("extras", [])),
        )


def query_function(query: str, r: int, p: float | None = None) -> ItemFunction:
    """Item function whose sum aggregate answers the query."""
    if query == L1:
        return rg_fn(1.0, r)
    if query in (LPP, LP):
        if p is None:
            raise ValueError(f"query {query} needs an exponent p")
        return rg_fn(float(p), r)
    if query == MAX_SUM:
        return max_fn(r)
    if query == MIN_SUM:
        return min_fn(r)
    if query == DISTINCT:
        return or_fn(r)
    raise ValueError(f"no single item function for query {query!r}")


def _per_item_estimate(
    outcome: Outcome,
    f: ItemFunction,
    estimator: str,
    true_vector: Sequence[float] | None,
    grid_n: int,
) -> float:
    if estimator == "j":
        return j_estimate(outcome, f)
    if estimator == "ht":
        return ht_estimate(outcome, f)
    if estimator == "voptimal-oracle":
        if true_vector is None:
            raise ValueError("the hull-derivative oracle needs the true data")
        return v_optimal_estimate_at(true_vector, f, outcome.scheme, outcome.seed, grid_n)
    raise ValueError(f"unknown estimator {estimator!r}")


def sum_estimate(
    samples: Mapping[str, Outcome],
    f: ItemFunction,
    estimator: str,
    item_ids: Sequence[str] | None = None,
    *,
    data: InstanceSet | None = None,
    subset_label: str = "all",
    grid_n: int = 256,
) -> QueryResult:
    """Sum of per-item estimates of ``f`` over the selected items."""
    ids = list(samples) if item_ids is None else [str(i) for i in item_ids]
    contributions = []
    for item in ids:
        outcome = samples[item]
        tv = data.vector(item) if data is not None else None
        contributions.append((item, _per_item_estimate(outcome, f, estimator, tv, grid_n)))
    total = float(sum(c for _, c in contributions))
    return QueryResult(
        query=f"sum[{f.describe()}]",
        value=total,
        per_item=tuple(contributions),
        subset=subset_label,
    )


def exact_query(
    data: InstanceSet,
    query: str,
    item_ids: Sequence[str] | None = None,
    p: float | None = None,
    subset_label: str = "all",
) -> QueryResult:
    """Ground-truth query answer straight from the data."""
    ids = list(data.item_ids) if item_ids is None else [str(i) for i in item_ids]
    if query == JACCARD:
        lo = exact_query(data, MIN_SUM, ids, subset_label=subset_label)
        hi = exact_query(data, MAX_SUM, ids, subset_label=subset_label)
        value = 0.0 if hi.value == 0 else min(1.0, max(0.0, lo.value / hi.value))
        return QueryResult(
            query=JACCARD,
            value=value,
            per_item=(),
            subset=subset_label,
            extras=(("minsum", lo.value), ("maxsum", hi.value)),
        )
    f = query_function(query, data.r, p)
    contributions = [(item, evaluate(f, data.vector(item))) for item in ids]
    total = float(sum(c for _, c in contributions))
    if query == LP:
        total = total ** (1.0 / float(p))
    return QueryResult(query=query, value=total, per_item=tuple(contributions), subset=subset_label)


def estimate_query(
    samples: Mapping[str, Outcome],
    r: int,
    query: str,
    estimator: str,
    item_ids: Sequence[str] | None = None,
    p: float | None = None,
    *,
    data: InstanceSet | None = None,
    subset_label: str = "all",
    grid_n: int = 256,
) -> QueryResult:
    """Query answer from coordinated samples.

    Jaccard is the clamped ratio of the min-sum and max-sum estimates; the
    Lp difference is the p-th root of the Lp^p estimate.
    """
    if query == JACCARD:
        lo = estimate_query(samples, r, MIN_SUM, estimator, item_ids, data=data, grid_n=grid_n)
        hi = estimate_query(samples, r, MAX_SUM, estimator, item_ids, data=data, grid_n=grid_n)
        value = 0.0 if hi.value == 0 else min(1.0, max(0.0, lo.value / hi.value))
        return QueryResult(
            query=JACCARD,
            value=value,
            per_item=(),
            subset=subset_label,
            extras=(("minsum", lo.value), ("maxsum", hi.value)),
        )
    f = query_function(query, r, p)
    res = sum_estimate(samples, f, estimator, item_ids, data=data, subset_label=subset_label, grid_n=grid_n)
    value = res.value
    if query == LP:
        value = value ** (1.0 / float(p))
    return QueryResult(query=query, value=value, per_item=res.per_item, subset=subset_label)


# ---------------------------------------------------------------------------
# bottom-k estimation via rank conditioning


def bottomk_member_outcome(value: float, seed: float, threshold: float) -> Outcome:
    """Single-entry outcome equivalent to a member's conditional inclusion
    rule under PPS ranks: rank >= T is the same as value >= T * seed."""
    scheme = TauScheme.pps(threshold, r=1)
    return sample_item((value,), seed, scheme)


def bottomk_estimate(
    sample: BottomKSample,
    query: str,
    estimator: str = "ht",
    item_ids: Sequence[str] | None = None,
    subset_label: str = "all",
) -> QueryResult:
    """Subset-sum or distinct-count estimate from a bottom-k sample.

    Members behave as independently sampled entries once conditioned on
    their threshold; items outside the sample contribute 0.
    """
    if query not in (MAX_SUM, MIN_SUM, L1, DISTINCT, "sum"):
        raise ValueError(f"query {query!r} not supported on bottom-k samples")
    wanted = None if item_ids is None else {str(i) for i in item_ids}
    contributions = []
    for m in sample.members:
        if wanted is not None and m.item_id not in wanted:
            continue
        weight = 1.0 if query == DISTINCT else m.value
        if estimator == "ht":
            p = inclusion_probability(sample.rank_fn, m.value, m.threshold)
            contributions.append((m.item_id, weight / p if p > 0 else 0.0))
        elif estimator == "j":
            if sample.rank_fn.kind != PPS_RANK_KIND:
                raise ValueError(
                    "dyadic estimation of bottom-k members needs PPS ranks; "
                    "exponential-rank thresholds do not invert to a monotone map"
                )
            outcome = bottomk_member_outcome(m.value, m.seed, m.threshold)
            f = or_fn(1) if query == DISTINCT else max_fn(1)
            contributions.append((m.item_id, j_estimate(outcome, f)))
        else:
            raise ValueError(f"unknown bottom-k estimator {estimator!r}")
    total = float(sum(c for _, c in contributions))
    return QueryResult(
        query=f"bottomk-{query}",
        value=total,
        per_item=tuple(contributions),
        subset=subset_label,
    )


# ---------------------------------------------------------------------------
# Monte Carlo sweeps over salts (vectorised via the dyadic piece table)


def dyadic_value_table(
    v: Sequence[float],
    f: ItemFunction,
    scheme: TauScheme,
    depth: int = 60,
    domain: Domain | None = None,
) -> np.ndarray:
    """Dyadic estimates indexed by ``floor(-log2 seed)``; the estimate is
    constant on each dyadic seed interval, so sampling reduces to a table
    lookup."""
    return j_piece_values(v, f, scheme, depth, domain)


def mc_query_estimates(
    data: InstanceSet,
    scheme: TauScheme,
    query: str,
    item_ids: Sequence[str],
    salts: np.ndarray,
    p: float | None = None,
    estimator: str = "j",
    depth: int = 60,
) -> np.ndarray:
    """Query estimate per salt, vectorised.

    Dyadic estimates are looked up from per-item tables; inverse-probability
    estimates from their single certifying block.  Jaccard combines the two
    sums salt-by-salt.
    """
    salts = np.asarray(salts, dtype=np.uint64)
    if query == JACCARD:
        lo = mc_query_estimates(data, scheme, MIN_SUM, item_ids, salts, estimator=estimator, depth=depth)
        hi = mc_query_estimates(data, scheme, MAX_SUM, item_ids, salts, estimator=estimator, depth=depth)
        out = np.zeros_like(lo)
        np.divide(lo, hi, out=out, where=hi > 0)
        return np.clip(out, 0.0, 1.0)
    f = query_function(query, data.r, p)
    total = np.zeros(salts.shape[0])
    for item in item_ids:
        v = data.vector(item)
        us = seeds_for_salts(item, salts)
        if estimator == "j":
            table = dyadic_value_table(v, f, scheme, depth)
            idx = np.floor(-np.log2(us)).astype(int)
            idx = np.clip(idx, 0, depth)
            total += table[idx]
        elif estimator == "ht":
            est = ht_estimate_fn(v, f, scheme)
            block = est.pieces[0]
            total += np.where(us <= block.hi, block.value, 0.0)
        else:
            raise ValueError(f"Monte Carlo sweeps support 'j' and 'ht', not {estimator!r}")
    if query == LP:
        total = total ** (1.0 / float(p))
    return total
