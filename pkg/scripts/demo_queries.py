"""Exact vs. estimated multi-instance queries on the bundled demo data.

Runs the three reference aggregates exactly, then re-estimates them from
coordinated samples with the dyadic and inverse-probability estimators,
averaging over many salts to show the estimates concentrate on the truth.

Usage: python scripts/demo_queries.py [--reps 100000]
"""

from __future__ import annotations

import argparse
import math
from pathlib import Path

import numpy as np

from coordest.cli import ingest
from coordest.estimators import exact_query, mc_query_estimates
from coordest.model import TauScheme

DATA = Path(__file__).resolve().parent.parent / "data" / "demo_two_instances.csv"


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--reps", type=int, default=100_000)
    ap.add_argument("--tau", type=float, default=4.0)
    args = ap.parse_args()

    data = ingest(DATA)
    scheme = TauScheme.pps(args.tau, r=data.r)
    salts = np.arange(args.reps, dtype=np.uint64)

    cases = [
        ("lpp", ["1", "2", "3", "4"], 2.0),
        ("l1", ["1", "3"], None),
        ("maxsum", ["6", "7", "8"], None),
        ("minsum", list(data.item_ids), None),
        ("distinct", list(data.item_ids), None),
    ]
    print(f"{'query':<10}{'items':<12}{'exact':>8}{'mean(j)':>10}{'se':>9}{'z':>7}")
    for query, ids, p in cases:
        truth = exact_query(data, query, ids, p=p).value
        ests = mc_query_estimates(data, scheme, query, ids, salts, p=p, estimator="j")
        se = float(ests.std(ddof=1)) / math.sqrt(len(ests))
        z = (float(ests.mean()) - truth) / se if se > 0 else 0.0
        label = ",".join(ids) if len(ids) <= 4 else "all"
        print(f"{query:<10}{label:<12}{truth:>8.3f}{ests.mean():>10.4f}{se:>9.4f}{z:>7.2f}")


if __name__ == "__main__":
    main()
