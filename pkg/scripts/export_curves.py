"""Export plot-ready columns (u, lower bound, hull, dyadic, optimal) for one
data vector, to eyeball how the cumulative estimators track the bound.

Usage: python scripts/export_curves.py --v 1,0 --function one_sided_rg:p=2,hi=1,lo=2 \
           --tau 1,1 --out curves.csv
"""

from __future__ import annotations

import argparse
import csv
import sys

from coordest.analysis import curve_table
from coordest.functions import parse_function
from coordest.model import TauScheme


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--v", default="1,0", help="comma-separated data vector")
    ap.add_argument("--function", default="one_sided_rg:p=2,hi=1,lo=2")
    ap.add_argument("--tau", default="1,1", help="comma-separated PPS thresholds")
    ap.add_argument("--grid-n", type=int, default=512)
    ap.add_argument("--out", default=None, help="CSV path (default stdout)")
    args = ap.parse_args()

    v = tuple(float(x) for x in args.v.split(","))
    scheme = TauScheme.pps([float(t) for t in args.tau.split(",")])
    f = parse_function(args.function, len(v))
    rows = curve_table(v, f, scheme, grid_n=args.grid_n)

    fp = open(args.out, "w", newline="") if args.out else sys.stdout
    writer = csv.writer(fp)
    writer.writerow(["u", "lower_bound", "hull", "j_estimate", "v_optimal"])
    writer.writerows(rows)
    if args.out:
        fp.close()
        print(f"{len(rows)} rows -> {args.out}")


if __name__ == "__main__":
    main()
