"""Command-line harness: ingest CSV instances, draw coordinated samples,
answer multi-instance queries, and run analysis sweeps.

Subcommands:

* ``sample``        draw coordinated samples and write one record per item
* ``estimate``      answer a query (exact or estimated, optionally Monte
                    Carlo over salts, optionally bottom-k mode)
* ``analyze``       per-item competitiveness reports; nonzero exit if any
                    ratio exceeds the certified bound or the implication
                    chain breaks
* ``characterize``  per-item estimability/boundedness/variance verdicts and
                    optional plot-ready curves
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import IO, Sequence

import numpy as np

from .analysis import (
    check_bounded,
    check_estimable,
    check_finite_variance,
    competitiveness_ratio,
    curve_table,
    implication_chain_ok,
)
from .estimators import (
    LP,
    LPP,
    QUERY_KINDS,
    bottomk_estimate,
    estimate_query,
    exact_query,
    mc_query_estimates,
)
from .functions import parse_function
from .model import InstanceSet, PiecewiseLinearMap, PpsMap, TauScheme
from .samplers import (
    EXP_RANK,
    PPS_RANK,
    bottomk_sample,
    inclusion_probability,
    sample_instances,
    write_samples,
)


def ingest(path: str | Path) -> InstanceSet:
    """Read an instance CSV with header ``item,v1,...,vr``.

    Rejects duplicate item ids, malformed rows, and negative values, naming
    the offending cell.  An empty data section is a valid empty set.
    """
    path = Path(path)
    with path.open(newline="") as fp:
        reader = csv.reader(fp)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: missing header") from None
        header = [h.strip() for h in header]
        if not header or header[0] != "item" or len(header) < 2:
            raise ValueError(f"{path}: header must be item,v1,...,vr")
        r = len(header) - 1
        ids: list[str] = []
        rows: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != r + 1:
                raise ValueError(f"{path}: row {lineno} has {len(row)} fields, expected {r + 1}")
            item = row[0].strip()
            if item in ids:
                raise ValueError(f"{path}: row {lineno}: duplicate item id {item!r}")
            values = []
            for col, cell in enumerate(row[1:], start=1):
                try:
                    x = float(cell)
                except ValueError:
                    raise ValueError(
                        f"{path}: row {lineno}, column {header[col]}: bad number {cell!r}"
                    ) from None
                if x < 0:
                    raise ValueError(
                        f"{path}: row {lineno}, column {header[col]}: negative value {cell}"
                    )
                values.append(x)
            ids.append(item)
            rows.append(values)
    matrix = np.array(rows, dtype=float) if rows else np.empty((0, r))
    return InstanceSet(tuple(ids), matrix)


def parse_scheme(spec: str, r: int) -> TauScheme:
    """Parse an inline scheme spec: ``pps:tau=4`` (shared threshold) or
    ``pps:tau=4,2`` (one threshold per instance)."""
    name, _, argstr = spec.partition(":")
    if name.strip().lower() != "pps":
        raise ValueError(f"unknown inline scheme {spec!r}; use a scheme file for piecewise maps")
    key, _, rest = argstr.partition("=")
    if key.strip() != "tau" or not rest:
        raise ValueError(f"scheme spec {spec!r} needs tau=<t> or tau=<t1>,...,<tr>")
    taus = [float(c) for c in rest.split(",") if c.strip()]
    if len(taus) == 1:
        return TauScheme.pps(taus[0], r=r)
    if len(taus) != r:
        raise ValueError(f"scheme has {len(taus)} thresholds for {r} instances")
    return TauScheme.pps(taus)


def parse_scheme_file(text: str, r: int) -> TauScheme:
    """Key-value scheme config: one ``tau.<i> = pps:<t>`` or
    ``tau.<i> = pwl:u0:t0,u1:t1,...`` line per instance."""
    entries: dict[int, str] = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, value = line.partition("=")
        key = key.strip().lower()
        if not key.startswith("tau."):
            raise ValueError(f"unknown scheme config key {key!r}")
        entries[int(key[4:])] = value.strip()
    if sorted(entries) != list(range(1, r + 1)):
        raise ValueError(f"scheme config must define tau.1..tau.{r}")
    maps = []
    for i in range(1, r + 1):
        kind, _, rest = entries[i].partition(":")
        kind = kind.strip().lower()
        if kind == "pps":
            maps.append(PpsMap(float(rest)))
        elif kind == "pwl":
            nums = [float(x) for x in rest.replace(":", ",").split(",") if x.strip()]
            if len(nums) % 2:
                raise ValueError(f"tau.{i}: joint list must pair seeds with values")
            pts = tuple((nums[k], nums[k + 1]) for k in range(0, len(nums), 2))
            maps.append(PiecewiseLinearMap(pts))
        else:
            raise ValueError(f"tau.{i}: unknown map kind {kind!r}")
    return TauScheme(tuple(maps))


def parse_query(spec: str, p: float | None) -> tuple[str, float | None]:
    """Split a query spec like ``lpp:p=2`` (or ``lp:2``) into kind and
    exponent; an explicit ``--p`` flag wins over the embedded form."""
    kind, _, rest = spec.partition(":")
    kind = kind.strip().lower()
    if rest:
        value = rest.partition("=")[2] if "=" in rest else rest
        if p is None:
            p = float(value)
    return kind, p


def resolve_items(spec: str, data: InstanceSet) -> tuple[list[str], str]:
    """Item subset: ``all``, ``both-positive``, ``positive-in:<k>`` (1-based
    instance), or an explicit comma list of ids."""
    spec = spec.strip()
    if spec == "all":
        return list(data.item_ids), "all"
    if spec == "both-positive":
        ids = [item for item, v in data.rows() if all(x > 0 for x in v)]
        return ids, "both-positive"
    if spec.startswith("positive-in:"):
        k = int(spec.split(":", 1)[1]) - 1
        if not 0 <= k < data.r:
            raise ValueError(f"instance index out of range in {spec!r}")
        ids = [item for item, v in data.rows() if v[k] > 0]
        return ids, spec
    ids = [s.strip() for s in spec.split(",") if s.strip()]
    known = set(data.item_ids)
    missing = [i for i in ids if i not in known]
    if missing:
        raise ValueError(f"unknown item ids: {', '.join(missing)}")
    return ids, spec


@dataclass
class RunConfig:
    """Validated knobs shared by the subcommands."""

    input: Path
    scheme_spec: str = "pps:tau=4"
    scheme_file: Path | None = None
    function_spec: str | None = None
    estimator: str = "exact"
    query: str | None = None
    p: float | None = None
    items: str = "all"
    salt: int = 0
    reps: int = 1
    out: Path | None = None
    grid_n: int = 256
    depth: int = 40
    eps: float = 1e-3
    k: int | None = None
    rank: str = "pps"
    instance: int = 1

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if self.grid_n < 16:
            raise ValueError("grid_n must be at least 16")
        if not 8 <= self.depth <= 60:
            raise ValueError("depth must lie in [8, 60]")

    def load(self) -> tuple[InstanceSet, TauScheme]:
        data = ingest(self.input)
        if self.scheme_file is not None:
            scheme = parse_scheme_file(Path(self.scheme_file).read_text(), data.r)
        else:
            scheme = parse_scheme(self.scheme_spec, data.r)
        return data, scheme


def _open_out(path: Path | None) -> IO[str]:
    return sys.stdout if path is None else open(path, "w")


def _close_out(fp: IO[str]) -> None:
    if fp is not sys.stdout:
        fp.close()


def cmd_sample(cfg: RunConfig) -> int:
    data, scheme = cfg.load()
    outcomes = sample_instances(data, scheme, cfg.salt)
    fp = _open_out(cfg.out)
    try:
        write_samples(outcomes, fp)
    finally:
        _close_out(fp)
    return 0


def run_query(cfg: RunConfig) -> dict:
    """One query answer as a JSON-ready record; Monte Carlo over salts when
    ``reps`` exceeds 1."""
    data, scheme = cfg.load()
    if cfg.query is None:
        raise ValueError("estimate needs --query")
    query, p = parse_query(cfg.query, cfg.p)
    if query not in QUERY_KINDS + ("sum",):
        raise ValueError(f"unknown query {cfg.query!r}")
    cfg = replace(cfg, query=query, p=p)
    ids, subset = resolve_items(cfg.items, data)

    if cfg.k is not None:
        return _run_bottomk_query(cfg, data, ids, subset)

    record: dict = {
        "query": cfg.query,
        "estimator": cfg.estimator,
        "subset": subset,
        "salt": cfg.salt,
        "reps": cfg.reps,
    }
    if cfg.query in (LPP, LP) and cfg.p is None:
        raise ValueError(f"query {cfg.query} needs an exponent: --p or {cfg.query}:p=<p>")
    if cfg.estimator == "exact":
        res = exact_query(data, cfg.query, ids, p=cfg.p, subset_label=subset)
        record["value"] = res.value
        record.update({k: v for k, v in res.extras})
        return record
    if cfg.reps == 1:
        samples = sample_instances(data, scheme, cfg.salt)
        res = estimate_query(
            samples, data.r, cfg.query, cfg.estimator, ids, p=cfg.p,
            data=data, subset_label=subset, grid_n=cfg.grid_n,
        )
        record["value"] = res.value
        record.update({k: v for k, v in res.extras})
        return record
    salts = np.arange(cfg.salt, cfg.salt + cfg.reps, dtype=np.uint64)
    if cfg.estimator in ("j", "ht"):
        estimates = mc_query_estimates(
            data, scheme, cfg.query, ids, salts, p=cfg.p, estimator=cfg.estimator,
        )
    else:
        values = []
        for s in salts.tolist():
            samples = sample_instances(data, scheme, int(s))
            values.append(
                estimate_query(
                    samples, data.r, cfg.query, cfg.estimator, ids, p=cfg.p,
                    data=data, subset_label=subset, grid_n=cfg.grid_n,
                ).value
            )
        estimates = np.array(values)
    mean = float(estimates.mean())
    std = float(estimates.std(ddof=1)) if len(estimates) > 1 else 0.0
    record.update(
        value=mean,
        stderr=std / math.sqrt(len(estimates)),
        std=std,
    )
    return record


def _run_bottomk_query(cfg: RunConfig, data: InstanceSet, ids: list[str], subset: str) -> dict:
    rank_fn = PPS_RANK if cfg.rank == "pps" else EXP_RANK
    inst = cfg.instance - 1
    if not 0 <= inst < data.r:
        raise ValueError(f"--instance {cfg.instance} out of range")
    values = {item: v[inst] for item, v in data.rows()}
    sample = bottomk_sample(values, cfg.k, rank_fn, cfg.salt)
    estimator = "ht" if cfg.estimator in ("exact", "ht") else cfg.estimator
    res = bottomk_estimate(sample, cfg.query, estimator, ids, subset_label=subset)
    members = [
        {
            "item": m.item_id,
            "value": m.value,
            "rank": m.rank,
            "threshold": m.threshold,
            "inclusion_probability": inclusion_probability(rank_fn, m.value, m.threshold),
        }
        for m in sample.members
    ]
    return {
        "query": res.query,
        "estimator": estimator,
        "rank": cfg.rank,
        "k": cfg.k,
        "instance": cfg.instance,
        "subset": subset,
        "salt": cfg.salt,
        "value": res.value,
        "members": members,
    }


def cmd_estimate(cfg: RunConfig) -> int:
    record = run_query(cfg)
    fp = _open_out(cfg.out)
    try:
        fp.write(json.dumps(record) + "\n")
    finally:
        _close_out(fp)
    return 0


def run_analysis(cfg: RunConfig, fp: IO[str]) -> int:
    """Per-item competitiveness reports; returns a nonzero exit code when any
    ratio exceeds the certified bound or the implication chain breaks."""
    data, scheme = cfg.load()
    if cfg.function_spec is None:
        raise ValueError("analyze needs --function")
    f = parse_function(cfg.function_spec, data.r)
    ids, subset = resolve_items(cfg.items, data)
    failed = False
    for item in ids:
        v = data.vector(item)
        report = competitiveness_ratio(v, f, scheme, grid_n=cfg.grid_n, depth=cfg.depth)
        rec = {"item": item, "vector": list(v), "function": f.describe(), **report.to_dict()}
        fp.write(json.dumps(rec) + "\n")
        if not report.competitive_ok or not report.chain_ok:
            failed = True
    return 1 if failed else 0


def cmd_analyze(cfg: RunConfig) -> int:
    fp = _open_out(cfg.out)
    try:
        return run_analysis(cfg, fp)
    finally:
        _close_out(fp)


def cmd_characterize(cfg: RunConfig, curves: Path | None) -> int:
    data, scheme = cfg.load()
    if cfg.function_spec is None:
        raise ValueError("characterize needs --function")
    f = parse_function(cfg.function_spec, data.r)
    ids, _ = resolve_items(cfg.items, data)
    fp = _open_out(cfg.out)
    curves_fp = open(curves, "w", newline="") if curves is not None else None
    writer = None
    if curves_fp is not None:
        writer = csv.writer(curves_fp)
        writer.writerow(["item", "u", "lower_bound", "hull", "j_estimate", "v_optimal"])
    failed = False
    try:
        for item in ids:
            v = data.vector(item)
            est = check_estimable(v, f, scheme, eps=cfg.eps)
            bd = check_bounded(v, f, scheme, eps=cfg.eps)
            fv = check_finite_variance(v, f, scheme, grid_n=cfg.grid_n)
            chain = implication_chain_ok(bd.ok, fv.ok, est.ok)
            failed = failed or not chain
            fp.write(
                json.dumps(
                    {
                        "item": item,
                        "vector": list(v),
                        "function": f.describe(),
                        "estimable": est.ok,
                        "estimable_gap": est.value,
                        "bounded": bd.ok,
                        "bounded_slope": bd.value,
                        "finite_variance": fv.ok,
                        "chain_ok": chain,
                    }
                )
                + "\n"
            )
            if writer is not None:
                for row in curve_table(v, f, scheme, grid_n=cfg.grid_n, depth=cfg.depth):
                    writer.writerow([item, *row])
    finally:
        _close_out(fp)
        if curves_fp is not None:
            curves_fp.close()
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coordest",
        description="Coordinated shared-seed sampling and multi-instance estimation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, scheme: bool = True):
        p.add_argument("--input", required=True, type=Path, help="instance CSV (item,v1,...,vr)")
        if scheme:
            p.add_argument("--scheme", default="pps:tau=4", help="inline scheme, e.g. pps:tau=4")
            p.add_argument("--scheme-file", type=Path, default=None, help="key-value scheme config")
        p.add_argument("--salt", type=int, default=0)
        p.add_argument("--out", type=Path, default=None, help="output path (default stdout)")

    p_sample = sub.add_parser("sample", help="draw coordinated samples")
    common(p_sample)

    p_est = sub.add_parser("estimate", help="answer a multi-instance query")
    common(p_est)
    p_est.add_argument("--query", required=True, help="l1|lpp:p|lp:p|maxsum|minsum|jaccard|distinct (bottom-k mode adds sum)")
    p_est.add_argument("--p", type=float, default=None, help="exponent for lpp/lp queries")
    p_est.add_argument("--estimator", default="exact", choices=("exact", "j", "ht", "voptimal-oracle"))
    p_est.add_argument("--items", default="all")
    p_est.add_argument("--reps", type=int, default=1, help="Monte Carlo repetitions over salts")
    p_est.add_argument("--k", type=int, default=None, help="bottom-k mode: sample size")
    p_est.add_argument("--rank", default="pps", choices=("pps", "exp"))
    p_est.add_argument("--instance", type=int, default=1, help="bottom-k mode: 1-based instance")
    p_est.add_argument("--grid-n", type=int, default=256)
    p_est.add_argument("--depth", type=int, default=40)

    p_an = sub.add_parser("analyze", help="competitiveness reports per item")
    common(p_an)
    p_an.add_argument("--function", required=True, help="item function, e.g. rg:p=2")
    p_an.add_argument("--items", default="all")
    p_an.add_argument("--grid-n", type=int, default=256)
    p_an.add_argument("--depth", type=int, default=40)

    p_ch = sub.add_parser("characterize", help="estimability verdicts per item")
    common(p_ch)
    p_ch.add_argument("--function", required=True)
    p_ch.add_argument("--items", default="all")
    p_ch.add_argument("--grid-n", type=int, default=256)
    p_ch.add_argument("--depth", type=int, default=40)
    p_ch.add_argument("--eps", type=float, default=1e-3)
    p_ch.add_argument("--curves", type=Path, default=None, help="plot-ready curve CSV")

    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        input=args.input,
        scheme_spec=getattr(args, "scheme", "pps:tau=4"),
        scheme_file=getattr(args, "scheme_file", None),
        function_spec=getattr(args, "function", None),
        estimator=getattr(args, "estimator", "exact"),
        query=getattr(args, "query", None),
        p=getattr(args, "p", None),
        items=getattr(args, "items", "all"),
        salt=args.salt,
        reps=getattr(args, "reps", 1),
        out=args.out,
        grid_n=getattr(args, "grid_n", 256),
        depth=getattr(args, "depth", 40),
        eps=getattr(args, "eps", 1e-3),
        k=getattr(args, "k", None),
        rank=getattr(args, "rank", "pps"),
        instance=getattr(args, "instance", 1),
    )


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    cfg = _config_from_args(args)
    if args.command == "sample":
        return cmd_sample(cfg)
    if args.command == "estimate":
        return cmd_estimate(cfg)
    if args.command == "analyze":
        return cmd_analyze(cfg)
    if args.command == "characterize":
        return cmd_characterize(cfg, args.curves)
    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    raise SystemExit(main())
