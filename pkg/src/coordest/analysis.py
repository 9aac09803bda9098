"""Numerical verification of the estimability characterization and variance
competitiveness.

For a data vector ``v`` and function ``f`` the full lower-bound curve
``lb(u)`` decides which estimator properties are attainable:

* unbiased + nonnegative      <=>  lb(u) -> f(v) as u -> 0
* ... + finite variance       <=>  the squared hull slopes are integrable
* ... + bounded estimates     <=>  (f(v) - lb(u)) / u stays bounded

The checks here are numeric by design (they must also work for synthetic
curves supplied as plain callables): limits are probed on geometric seed
sequences and integrals on geometric cutoff sequences, with convergence of
the probes standing in for the analytic limit.

Competitiveness compares the squared-estimate integral of the dyadic
estimator against the hull optimum.  The certified bound for the dyadic
construction is 84 (= 28 * 3: each dyadic block's square is at most 28 times
the optimum's square mass on a 3-fold cover of nearby seeds).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .estimators import (
    j_estimate_fn,
    j_piece_values,
    ht_estimate_fn,
    v_optimal_estimates,
)
from .functions import (
    ItemFunction,
    LowerBoundFn,
    evaluate,
    lb_function,
    lower_bound_from_vector,
)
from .hull import EstimateFn, integrate_square
from .model import Domain, TauScheme

RATIO_BOUND = 84.0

GAP_TOLERANCE = 1e-9


class AnalysisError(RuntimeError):
    """An internal inconsistency that should be impossible for correct
    lower bounds (e.g. zero optimal mass under a nonzero dyadic mass)."""


@dataclass(frozen=True)
class CheckResult:
    ok: bool
    value: float
    probes: tuple[float, ...] = ()

    def __bool__(self) -> bool:
        return self.ok


def _as_curve(lb: LowerBoundFn | Callable[[float], float]) -> Callable:
    if isinstance(lb, LowerBoundFn):
        return lb.value
    return lb


def check_estimable_curve(
    lb: LowerBoundFn | Callable[[float], float],
    f_value: float,
    eps: float = 1e-3,
) -> CheckResult:
    """Does the lower-bound curve reach ``f_value`` in the limit toward 0?

    Probes the gap at ``eps, eps/4, eps/16``; the limit is accepted when the
    gap is already below tolerance or keeps shrinking (at least halving over
    the two refinements).  A plateau strictly above 0 means mass near seed 0
    is unreachable and no unbiased nonnegative estimator exists.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    curve = _as_curve(lb)
    if isinstance(lb, LowerBoundFn):
        head = lb.constant_head()
        if head is not None and head == f_value:
            return CheckResult(True, 0.0, (0.0, 0.0, 0.0))
    gaps = tuple(float(f_value - curve(eps * 4.0**-t)) for t in range(3))
    residual = gaps[-1]
    if residual <= GAP_TOLERANCE:
        return CheckResult(True, max(residual, 0.0), gaps)
    shrinking = gaps[2] < gaps[1] < gaps[0] and gaps[2] <= 0.5 * gaps[0]
    return CheckResult(shrinking, residual, gaps)


def check_bounded_curve(
    lb: LowerBoundFn | Callable[[float], float],
    f_value: float,
    eps: float = 1e-3,
) -> CheckResult:
    """Is ``(f_value - lb(u)) / u`` bounded as u -> 0?

    The ratio is tracked on ``eps * 4^-t`` for t = 0..8 and accepted when the
    final refinement no longer grows (beyond 1%); the observed supremum is
    reported.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    curve = _as_curve(lb)
    us = eps * 4.0 ** -np.arange(9, dtype=float)
    ratios = tuple(float((f_value - curve(u)) / u) for u in us)
    sup = max(ratios)
    ok = ratios[-1] <= max(1.01 * ratios[-2], ratios[-2] + 1e-12)
    return CheckResult(ok, sup, ratios)


def check_finite_variance_curve(
    lb: LowerBoundFn | Callable[[float], float],
    grid_n: int = 256,
    breakpoints: Sequence[float] = (1.0,),
) -> CheckResult:
    """Are the squared hull slopes integrable near seed 0?

    Computes partial square integrals of the hull-derivative estimates over
    ``(cutoff, 1]`` for a geometric cutoff sequence and accepts when the
    refinements become Cauchy: either the relative change drops below 1e-6
    or the per-refinement increments shrink geometrically (a bounded slope
    quarters them each step, so their tail is summable).  Divergent curves
    keep adding non-shrinking mass and fail.
    """
    if grid_n < 16:
        raise ValueError("grid_n must be at least 16")
    if not isinstance(lb, LowerBoundFn):
        lb = LowerBoundFn.from_callable(lb, breakpoints=breakpoints)
    est = v_optimal_estimates(lb, grid_n=max(grid_n, 512))
    # ladder from 1/16 down to just above the materialised support, so
    # curves with tiny revelation seeds still get probed past their mass
    floor = max(4.0 * est.support_left, 1e-300)
    steps = int(np.clip(np.ceil(np.log(0.0625 / floor) / np.log(4.0)), 13, 60))
    cutoffs = 0.0625 * 4.0 ** -np.arange(steps, dtype=float)
    partials = tuple(float(integrate_square(est, lo=c)) for c in cutoffs)
    last = partials[-1]
    if last == 0.0:
        return CheckResult(True, last, partials)
    rel = abs(last - partials[-2]) / abs(last)
    noise = 1e-15 * abs(last)
    deltas = [b - a for a, b in zip(partials, partials[1:])]
    shrinking = all(
        d2 <= 0.5 * d1 + noise for d1, d2 in zip(deltas[-3:], deltas[-2:])
    )
    return CheckResult(bool(rel < 1e-6 or shrinking), last, partials)


def _head_scale(lbf: LowerBoundFn) -> float:
    """The curve's smallest breakpoint.

    Below it the bound follows a single closed form all the way toward seed
    0, so that is where limit probes belong; above it the probes only see
    which branch is active, not the limit.
    """
    return min((b for b in lbf.breakpoints if b > 0.0), default=1.0)


def check_estimable(
    v: Sequence[float],
    f: ItemFunction,
    scheme: TauScheme,
    eps: float = 1e-3,
    domain: Domain | None = None,
) -> CheckResult:
    lbf = lb_function(f, v, scheme, domain)
    return check_estimable_curve(lbf, evaluate(f, v), eps * _head_scale(lbf))


def check_bounded(
    v: Sequence[float],
    f: ItemFunction,
    scheme: TauScheme,
    eps: float = 1e-3,
    domain: Domain | None = None,
) -> CheckResult:
    lbf = lb_function(f, v, scheme, domain)
    return check_bounded_curve(lbf, evaluate(f, v), eps * _head_scale(lbf))


def check_finite_variance(
    v: Sequence[float],
    f: ItemFunction,
    scheme: TauScheme,
    grid_n: int = 256,
    domain: Domain | None = None,
) -> CheckResult:
    return check_finite_variance_curve(lb_function(f, v, scheme, domain), grid_n)


def implication_chain_ok(bounded: bool, finite_variance: bool, estimable: bool) -> bool:
    """bounded => finite variance => estimable."""
    return (not bounded or finite_variance) and (not finite_variance or estimable)


# ---------------------------------------------------------------------------
# variance and competitiveness


def _estimate_fn(
    v: Sequence[float],
    f: ItemFunction,
    scheme: TauScheme,
    kind: str,
    grid_n: int,
    depth: int,
    domain: Domain | None,
) -> EstimateFn:
    if kind == "j":
        return j_estimate_fn(v, f, scheme, depth=depth, domain=domain)
    if kind == "ht":
        return ht_estimate_fn(v, f, scheme)
    if kind in ("voptimal", "v_optimal"):
        return v_optimal_estimates(lb_function(f, v, scheme, domain), grid_n)
    raise ValueError(f"unknown estimator kind {kind!r}")


def variance(
    v: Sequence[float],
    f: ItemFunction,
    scheme: TauScheme,
    estimator: str,
    grid_n: int = 512,
    depth: int = 40,
    domain: Domain | None = None,
) -> float:
    """Estimator variance on data ``v``: the squared-estimate integral minus
    ``f(v)^2``.  Tiny negative results (within 1e-9) are rounding and clamp
    to 0 with a warning."""
    fv = evaluate(f, v)
    est = _estimate_fn(v, f, scheme, estimator, grid_n, depth, domain)
    second_moment = integrate_square(est)
    if math.isinf(second_moment):
        return math.inf
    var = second_moment - fv * fv
    if var < 0.0:
        if var < -1e-9:
            raise AnalysisError(f"variance {var} below the rounding tolerance")
        warnings.warn(f"clamping tiny negative variance {var} to 0", stacklevel=2)
        var = 0.0
    return var


def variance_of(est: EstimateFn, f_value: float) -> float:
    """Variance of a materialised estimator with known expectation."""
    second = integrate_square(est)
    return math.inf if math.isinf(second) else second - f_value * f_value


@dataclass
class AnalysisReport:
    """Per-(data, function, scheme) analysis record."""

    square_integral_j: float
    square_integral_opt: float
    ratio: float
    variance_j: float
    variance_opt: float
    estimable: bool
    finite_variance: bool
    bounded: bool
    diagnostics: dict = field(default_factory=dict)

    @property
    def competitive_ok(self) -> bool:
        return self.ratio <= RATIO_BOUND

    @property
    def chain_ok(self) -> bool:
        return implication_chain_ok(self.bounded, self.finite_variance, self.estimable)

    def to_dict(self) -> dict:
        return {
            "square_integral_j": self.square_integral_j,
            "square_integral_opt": self.square_integral_opt,
            "ratio": self.ratio,
            "variance_j": self.variance_j,
            "variance_opt": self.variance_opt,
            "estimable": self.estimable,
            "finite_variance": self.finite_variance,
            "bounded": self.bounded,
            "diagnostics": dict(self.diagnostics),
        }

    @staticmethod
    def from_dict(d: Mapping) -> "AnalysisReport":
        return AnalysisReport(
            square_integral_j=float(d["square_integral_j"]),
            square_integral_opt=float(d["square_integral_opt"]),
            ratio=float(d["ratio"]),
            variance_j=float(d["variance_j"]),
            variance_opt=float(d["variance_opt"]),
            estimable=bool(d["estimable"]),
            finite_variance=bool(d["finite_variance"]),
            bounded=bool(d["bounded"]),
            diagnostics=dict(d.get("diagnostics", {})),
        )


def _clamped_variance(second_moment: float, f_value: float) -> float:
    var = second_moment - f_value * f_value
    return 0.0 if -1e-9 <= var < 0.0 else var


def competitiveness_ratio(
    v: Sequence[float],
    f: ItemFunction,
    scheme: TauScheme,
    grid_n: int = 512,
    depth: int = 40,
    domain: Domain | None = None,
) -> AnalysisReport:
    """Squared-mass ratio of the dyadic estimator to the hull optimum.

    The dyadic side is summed to ``depth`` and topped with a certified tail
    bound (each deep block's value is at most 16x the boundedness slope, so
    the unsummed mass is at most ``256 * slope^2 * 2^-depth``); the optimal
    side is the truncated hull integral, a slight underestimate.  The
    reported ratio is therefore conservative.
    """
    fv = evaluate(f, v)
    est_check = check_estimable(v, f, scheme, domain=domain)
    bd_check = check_bounded(v, f, scheme, domain=domain)
    fv_check = check_finite_variance(v, f, scheme, grid_n=max(grid_n, 64), domain=domain)
    diagnostics: dict = {
        "f_value": fv,
        "estimable_gap": est_check.value,
        "bounded_slope": bd_check.value,
        "depth": depth,
        "grid_n": grid_n,
    }
    if fv == 0.0:
        # the zero function on zero-valued data: both estimators vanish
        return AnalysisReport(
            square_integral_j=0.0,
            square_integral_opt=0.0,
            ratio=1.0,
            variance_j=0.0,
            variance_opt=0.0,
            estimable=est_check.ok,
            finite_variance=fv_check.ok,
            bounded=bd_check.ok,
            diagnostics=diagnostics,
        )
    if not est_check.ok:
        raise AnalysisError(
            f"data {tuple(v)} fails the estimability limit (gap {est_check.value}); "
            "competitiveness is undefined"
        )
    lbf = lb_function(f, v, scheme, domain)
    # keep summing dyadic blocks well past the curve's smallest breakpoint,
    # otherwise the worst-case tail bound dwarfs the actual deep mass for
    # data revealed only at tiny seeds
    min_bp = min((b for b in lbf.breakpoints if b > 0.0), default=1.0)
    depth = max(depth, min(int(math.ceil(-math.log2(min_bp))) + 20, 300))
    diagnostics["depth"] = depth
    vals = j_piece_values(v, f, scheme, depth, domain)
    widths = 2.0 ** -(np.arange(depth + 1, dtype=float) + 1.0)
    sq_j = float(np.sum(widths * vals**2))
    if bd_check.ok:
        # deep-tail slope observed below the last summed block
        u_tail = 2.0 ** (-depth + 2)
        slope = (fv - lower_bound_from_vector(f, v, scheme, u_tail, domain)) / u_tail
        slope = max(slope, bd_check.value)
        tail = 256.0 * slope * slope * 2.0**-depth
    else:
        tail = math.nan
    diagnostics["j_tail_bound"] = tail
    sq_j_total = sq_j + (tail if math.isfinite(tail) else 0.0)

    opt = v_optimal_estimates(lbf, grid_n)
    sq_opt = integrate_square(opt)
    if sq_opt <= 0.0:
        if sq_j_total > 0.0:
            raise AnalysisError(
                "optimal square integral is 0 while the dyadic integral is "
                f"{sq_j_total}; the lower-bound curve is inconsistent"
            )
        ratio = 1.0
    else:
        ratio = sq_j_total / sq_opt
    return AnalysisReport(
        square_integral_j=sq_j_total,
        square_integral_opt=sq_opt,
        ratio=ratio,
        variance_j=_clamped_variance(sq_j_total, fv),
        variance_opt=_clamped_variance(sq_opt, fv),
        estimable=est_check.ok,
        finite_variance=fv_check.ok,
        bounded=bd_check.ok,
        diagnostics=diagnostics,
    )


def curve_table(
    v: Sequence[float],
    f: ItemFunction,
    scheme: TauScheme,
    grid_n: int = 256,
    depth: int = 40,
    domain: Domain | None = None,
) -> list[tuple[float, float, float, float, float]]:
    """Plot-ready rows ``(u, lower_bound, hull, dyadic, optimal)``.

    The hull column is the cumulative optimal estimate (the integral of the
    optimal column from u to 1), which sits on or below the lower bound.
    """
    lbf = lb_function(f, v, scheme, domain)
    opt = v_optimal_estimates(lbf, grid_n)
    j_fn = j_estimate_fn(v, f, scheme, depth=min(depth, 40), domain=domain)
    us = np.unique(
        np.concatenate(
            [
                np.linspace(1.0 / grid_n, 1.0, grid_n),
                np.geomspace(1e-6, 1.0, grid_n // 2),
                np.array(lbf.breakpoints),
            ]
        )
    )
    lbs = np.asarray(lbf.value(us), dtype=float)
    rows = []
    for u, lb_u in zip(us.tolist(), lbs.tolist()):
        hull_u = opt.integral(lo=u)
        rows.append((u, lb_u, hull_u, j_fn.value_at(u), opt.value_at(u)))
    return rows
