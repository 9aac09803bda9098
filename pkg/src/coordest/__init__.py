"""Coordinated shared-seed sampling and unbiased nonnegative estimation of
multi-instance aggregates."""

from .analysis import (
    AnalysisError,
    AnalysisReport,
    CheckResult,
    RATIO_BOUND,
    check_bounded,
    check_bounded_curve,
    check_estimable,
    check_estimable_curve,
    check_finite_variance,
    check_finite_variance_curve,
    competitiveness_ratio,
    curve_table,
    implication_chain_ok,
    variance,
)
from .estimators import (
    EstimateFn,
    QueryResult,
    bottomk_estimate,
    estimate_query,
    exact_query,
    ht_estimate,
    j_cumulative,
    j_estimate,
    j_estimate_fn,
    mc_query_estimates,
    sum_estimate,
    v_optimal_estimates,
)
from .functions import (
    ItemFunction,
    LowerBoundFn,
    brute_force_lower_bound,
    evaluate,
    lb_breakpoints,
    lb_function,
    lower_bound,
    lower_bound_from_vector,
    max_fn,
    min_fn,
    one_sided_rg_fn,
    or_fn,
    parse_function,
    rg_fn,
)
from .hull import LowerHull, integrate_square, lower_hull
from .model import (
    Domain,
    InstanceSet,
    Known,
    Outcome,
    PiecewiseLinearMap,
    PpsMap,
    TauScheme,
    Unknown,
    hash_seed,
    is_consistent,
    tau_at,
)
from .samplers import (
    BottomKSample,
    EXP_RANK,
    PPS_RANK,
    RankFunction,
    bottomk_sample,
    inclusion_probability,
    rank_value,
    read_samples,
    sample_instances,
    sample_item,
    write_samples,
)

__version__ = "0.1.0"
