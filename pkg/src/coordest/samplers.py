"""Coordinated sampling of instances, rank functions, and bottom-k samples.

Per-item sampling applies the shared-seed rule directly.  Bottom-k sampling
keeps the k highest-rank items of one instance; conditioning on all other
seeds turns each item's membership into a fixed-threshold rule (rank at least
the k-th largest rank among the *other* items, i.e. the (k+1)-st largest
overall for members), which is what lets per-item estimators run unchanged on
bottom-k samples.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .model import (
    InstanceSet,
    Known,
    Outcome,
    TauScheme,
    Unknown,
    hash_seed,
    validate_seed,
)

PPS_RANK_KIND = "pps"
EXP_RANK_KIND = "exp"


@dataclass(frozen=True)
class RankFunction:
    """Seed/value to rank map. ``pps`` ranks are ``v/u``; ``exp`` ranks are
    ``-v/ln(u)``, matching successive weighted sampling without replacement.

    Both are non-decreasing in the value.  In the seed, ``pps`` ranks fall
    while ``exp`` ranks rise; either way a bottom-k sample keeps the k
    highest ranks.
    """

    kind: str

    def __post_init__(self):
        if self.kind not in (PPS_RANK_KIND, EXP_RANK_KIND):
            raise ValueError(f"unknown rank function kind {self.kind!r}")


PPS_RANK = RankFunction(PPS_RANK_KIND)
EXP_RANK = RankFunction(EXP_RANK_KIND)


def rank_value(rf: RankFunction, u: float, v: float) -> float:
    """Rank of a value under seed ``u``; may be ``inf`` at the boundary."""
    validate_seed(u)
    if v < 0:
        raise ValueError("values must be nonnegative")
    if v == 0.0:
        return 0.0
    if rf.kind == PPS_RANK_KIND:
        return v / u
    if u == 1.0:
        return math.inf
    return -v / math.log(u)


def rank_values(rf: RankFunction, us: np.ndarray, v: float) -> np.ndarray:
    """Vectorised :func:`rank_value` for one value over many seeds."""
    us = np.asarray(us, dtype=float)
    if v == 0.0:
        return np.zeros_like(us)
    if rf.kind == PPS_RANK_KIND:
        return v / us
    with np.errstate(divide="ignore"):
        out = np.where(us == 1.0, np.inf, -v / np.log(us))
    return out


def inclusion_probability(rf: RankFunction, v: float, threshold: float) -> float:
    """Probability over a fresh uniform seed that the value's rank reaches
    ``threshold``."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    if v <= 0:
        return 0.0
    if rf.kind == PPS_RANK_KIND:
        return min(1.0, v / threshold)
    return 1.0 - math.exp(-v / threshold)


def sample_item(v: Sequence[float], u: float, scheme: TauScheme) -> Outcome:
    """Outcome of sampling one item's data vector at seed ``u``: entry ``i``
    is revealed iff ``v_i >= tau_i(u)`` (ties sample)."""
    validate_seed(u)
    if len(v) != scheme.r:
        raise ValueError("vector arity does not match scheme")
    if any(x < lo for x, lo in zip(v, scheme.domain.lows)):
        raise ValueError("vector lies outside the declared domain")
    slots = []
    for i, x in enumerate(v):
        t = float(scheme.maps[i].value(u))
        slots.append(Known(float(x)) if x >= t else Unknown(t))
    return Outcome(u, tuple(slots), scheme)


def sample_instances(data: InstanceSet, scheme: TauScheme, salt: int) -> dict[str, Outcome]:
    """Coordinated samples for every item: seed each item by hashing
    ``(salt, item_id)``, then sample its vector."""
    if data.r != scheme.r:
        raise ValueError("data and scheme instance counts differ")
    out: dict[str, Outcome] = {}
    for item, v in data.rows():
        out[item] = sample_item(v, hash_seed(item, salt), scheme)
    return out


# ---------------------------------------------------------------------------
# bottom-k sampling with rank conditioning


@dataclass(frozen=True)
class BottomKMember:
    item_id: str
    value: float
    seed: float
    rank: float
    threshold: float  # k-th largest rank among all other items

    def __post_init__(self):
        if self.threshold > self.rank:
            raise ValueError("member threshold cannot exceed its own rank")


@dataclass(frozen=True)
class BottomKSample:
    """The k items of highest rank in one instance, with each member's
    conditional inclusion threshold."""

    k: int
    rank_fn: RankFunction
    members: tuple[BottomKMember, ...]

    def __post_init__(self):
        if len(self.members) != self.k:
            raise ValueError("member count must equal k")

    def member_ids(self) -> tuple[str, ...]:
        return tuple(m.item_id for m in self.members)


def conditional_threshold(ranks: Mapping[str, float], item_id: str, k: int) -> float:
    """k-th largest rank value with ``item_id`` excluded."""
    others = sorted((r for i, r in ranks.items() if i != item_id), reverse=True)
    if len(others) < k:
        raise ValueError("not enough other items to form a threshold")
    return others[k - 1]


def bottomk_sample(
    instance_values: Mapping[str, float] | Iterable[tuple[str, float]],
    k: int,
    rf: RankFunction,
    salt: int,
) -> BottomKSample:
    """Draw a bottom-k sample (k highest ranks, ties broken by item id)."""
    values = dict(instance_values)
    if k < 1:
        raise ValueError("k must be positive")
    if k >= len(values):
        raise ValueError(f"k={k} must be smaller than the item count {len(values)}")
    n_positive = sum(1 for v in values.values() if v > 0)
    if k >= n_positive:
        raise ValueError(f"k={k} must be smaller than the positive-item count {n_positive}")
    seeds = {item: hash_seed(item, salt) for item in values}
    ranks = {item: rank_value(rf, seeds[item], values[item]) for item in values}
    order = sorted(values, key=lambda item: (-ranks[item], str(item)))
    members = []
    for item in order[:k]:
        members.append(
            BottomKMember(
                item_id=str(item),
                value=float(values[item]),
                seed=seeds[item],
                rank=ranks[item],
                threshold=conditional_threshold(ranks, item, k),
            )
        )
    return BottomKSample(k=k, rank_fn=rf, members=tuple(members))


# ---------------------------------------------------------------------------
# sample serialization: one JSON record per line, floats written with
# round-trip precision so records reload bit-exactly


def outcome_record(item_id: str, outcome: Outcome) -> str:
    slots = []
    for slot in outcome.slots:
        if isinstance(slot, Known):
            slots.append({"known": slot.value})
        else:
            slots.append({"unknown_ub": slot.bound})
    return json.dumps({"item": item_id, "seed": outcome.seed, "slots": slots})


def write_samples(outcomes: Mapping[str, Outcome], fp: IO[str]) -> None:
    for item, outcome in outcomes.items():
        fp.write(outcome_record(item, outcome) + "\n")


def read_samples(fp: IO[str], scheme: TauScheme) -> dict[str, Outcome]:
    out: dict[str, Outcome] = {}
    for line in fp:
        line = line.strip()
        if not line:
            continue
        rec = json.loads(line)
        slots = []
        for s in rec["slots"]:
            if "known" in s:
                slots.append(Known(float(s["known"])))
            else:
                slots.append(Unknown(float(s["unknown_ub"])))
        out[rec["item"]] = Outcome(float(rec["seed"]), tuple(slots), scheme)
    return out
