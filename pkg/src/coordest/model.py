"""Core domain types for coordinated shared-seed sampling.

An *instance* assigns a nonnegative value to every item; an item's values
across ``r`` instances form its data vector.  Sampling is driven by a single
uniform seed ``u`` in (0, 1] per item (shared across instances) and a scheme
of monotone threshold maps ``tau_i``: the entry for instance ``i`` is revealed
exactly when ``v_i >= tau_i(u)``.  Everything an estimator may later see is an
:class:`Outcome`: the seed plus, per instance, either the revealed value or
the upper bound ``tau_i(u)``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence, Union

import numpy as np

MASK64 = (1 << 64) - 1

_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix64(x: int) -> int:
    """SplitMix64 step: bijective, well-distributed 64-bit mixer."""
    x = (x + _GAMMA) & MASK64
    x = ((x ^ (x >> 30)) * _MIX1) & MASK64
    x = ((x ^ (x >> 27)) * _MIX2) & MASK64
    return x ^ (x >> 31)


def _mix64_np(x: np.ndarray) -> np.ndarray:
    x = (x + np.uint64(_GAMMA)) & np.uint64(MASK64)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(_MIX1)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(_MIX2)
    return x ^ (x >> np.uint64(31))


@lru_cache(maxsize=None)
def item_key(item_id) -> int:
    """Stable 64-bit key for an opaque item identifier."""
    digest = hashlib.blake2b(str(item_id).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _unit_interval(h: int) -> float:
    # (h + 1) / 2^64 maps the full 64-bit range onto (0, 1]; zero is excluded
    # by construction, so seeds are always valid.
    return (h + 1) / 2.0**64


def _unit_interval_np(h: np.ndarray) -> np.ndarray:
    # Correctly-rounded (h + 1) / 2^64 without losing low bits in the
    # uint64 -> float64 conversion; bit-identical to the scalar path.
    # Both addends are exact, so h + 1 incurs exactly one rounding.
    hi = (h >> np.uint64(11)).astype(np.float64)
    lo = (h & np.uint64(0x7FF)).astype(np.float64)
    return (hi * 2048.0 + (lo + 1.0)) * 2.0**-64


def hash_seed(item_id, salt: int) -> float:
    """Deterministic seed in (0, 1] for ``(salt, item_id)``.

    The same pair always yields the same seed; this is what coordinates the
    samples of one item across instances.
    """
    h = _mix64(item_key(item_id) ^ _mix64(salt & MASK64))
    return _unit_interval(h)


def seeds_for_salts(item_id, salts: np.ndarray) -> np.ndarray:
    """Vectorised :func:`hash_seed` over an array of salts."""
    salts = np.asarray(salts, dtype=np.uint64)
    h = _mix64_np(np.uint64(item_key(item_id)) ^ _mix64_np(salts))
    return _unit_interval_np(h)


def seeds_for_items(item_ids: Iterable, salt: int) -> np.ndarray:
    """Vectorised :func:`hash_seed` over items for a fixed salt."""
    keys = np.array([item_key(i) for i in item_ids], dtype=np.uint64)
    h = _mix64_np(keys ^ np.uint64(_mix64(salt & MASK64)))
    return _unit_interval_np(h)


def validate_seed(u: float) -> float:
    if not (0.0 < u <= 1.0):
        raise ValueError(f"seed must lie in (0, 1], got {u!r}")
    return float(u)


@dataclass(frozen=True)
class Domain:
    """Bounding box for data vectors: coordinate-wise lower bounds, and
    optional upper caps used only for validating ingested data."""

    lows: tuple[float, ...]
    highs: tuple[float, ...] | None = None

    def __post_init__(self):
        if any(lo < 0.0 for lo in self.lows):
            raise ValueError("domain lower bounds must be nonnegative")
        if self.highs is not None:
            if len(self.highs) != len(self.lows):
                raise ValueError("domain highs/lows length mismatch")
            if any(h < lo for lo, h in zip(self.lows, self.highs)):
                raise ValueError("domain upper bound below lower bound")

    @staticmethod
    def default(r: int) -> "Domain":
        return Domain(lows=(0.0,) * r)

    def contains(self, v: Sequence[float]) -> bool:
        if len(v) != len(self.lows):
            return False
        if any(x < lo for x, lo in zip(v, self.lows)):
            return False
        if self.highs is not None and any(x > h for x, h in zip(v, self.highs)):
            return False
        return True


@dataclass(frozen=True)
class PpsMap:
    """Linear threshold map ``tau(u) = u * tau_star``.

    Under this map an entry with value ``v`` is revealed with probability
    ``min(1, v / tau_star)`` over a uniform seed.
    """

    tau_star: float

    def __post_init__(self):
        if not self.tau_star > 0.0:
            raise ValueError("tau_star must be positive")

    def value(self, u):
        return u * self.tau_star

    def infimum(self) -> float:
        return 0.0

    def joints(self) -> tuple[float, ...]:
        return ()

    def crossings(self, level: float) -> tuple[float, ...]:
        """Seeds in (0, 1) where the map equals ``level``."""
        u = level / self.tau_star
        return (u,) if 0.0 < u < 1.0 else ()


@dataclass(frozen=True)
class PiecewiseLinearMap:
    """Monotone non-decreasing continuous map given by ``(u, tau)`` joints.

    Joints must start at u=0, end at u=1, with strictly increasing u and
    non-decreasing nonnegative tau; values between joints interpolate
    linearly.
    """

    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pts = tuple((float(u), float(t)) for u, t in self.points)
        object.__setattr__(self, "points", pts)
        us = [u for u, _ in pts]
        ts = [t for _, t in pts]
        if len(pts) < 2 or us[0] != 0.0 or us[-1] != 1.0:
            raise ValueError("joints must span u=0 to u=1")
        if any(b <= a for a, b in zip(us, us[1:])):
            raise ValueError("joint seeds must be strictly increasing")
        if any(t < 0.0 for t in ts):
            raise ValueError("threshold values must be nonnegative")
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise ValueError("map must be non-decreasing")
        object.__setattr__(self, "_us", np.array(us))
        object.__setattr__(self, "_ts", np.array(ts))

    def value(self, u):
        out = np.interp(u, self._us, self._ts)
        return float(out) if np.isscalar(u) or np.ndim(u) == 0 else out

    def infimum(self) -> float:
        return float(self._ts[0])

    def joints(self) -> tuple[float, ...]:
        return tuple(u for u, _ in self.points if 0.0 < u < 1.0)

    def crossings(self, level: float) -> tuple[float, ...]:
        out = []
        pts = self.points
        for (ua, ta), (ub, tb) in zip(pts, pts[1:]):
            if ta <= level <= tb:
                if tb > ta:
                    out.append(ua + (level - ta) * (ub - ua) / (tb - ta))
                elif ta == level:
                    # flat segment sitting exactly at the level
                    out.extend((ua, ub))
        return tuple(sorted({u for u in out if 0.0 < u < 1.0}))


TauMap = Union[PpsMap, PiecewiseLinearMap]


@dataclass(frozen=True)
class TauScheme:
    """Per-instance threshold maps plus the declared data domain.

    The infimum of each map's range must not exceed the domain's lower bound
    for that coordinate, otherwise some data values could never be sampled at
    any seed and the scheme is rejected.
    """

    maps: tuple[TauMap, ...]
    domain: Domain | None = None

    def __post_init__(self):
        maps = tuple(self.maps)
        object.__setattr__(self, "maps", maps)
        if not maps:
            raise ValueError("scheme needs at least one instance map")
        domain = self.domain if self.domain is not None else Domain.default(len(maps))
        object.__setattr__(self, "domain", domain)
        if len(domain.lows) != len(maps):
            raise ValueError("domain arity does not match instance count")
        for i, m in enumerate(maps):
            if m.infimum() > domain.lows[i]:
                raise ValueError(
                    f"map {i}: infimum {m.infimum()} exceeds domain lower bound "
                    f"{domain.lows[i]}; such values could never be sampled"
                )

    @property
    def r(self) -> int:
        return len(self.maps)

    @staticmethod
    def pps(tau_stars, r: int | None = None, domain: Domain | None = None) -> "TauScheme":
        """Convenience constructor; a scalar ``tau_stars`` is shared by all
        ``r`` instances."""
        if np.isscalar(tau_stars):
            if r is None:
                raise ValueError("scalar tau_star needs an explicit instance count")
            stars = (float(tau_stars),) * r
        else:
            stars = tuple(float(t) for t in tau_stars)
        return TauScheme(tuple(PpsMap(t) for t in stars), domain=domain)

    def common_pps_tau(self) -> float | None:
        """The shared tau_star if every map is PPS with the same threshold."""
        if all(isinstance(m, PpsMap) for m in self.maps):
            stars = {m.tau_star for m in self.maps}
            if len(stars) == 1:
                return stars.pop()
        return None


def tau_at(scheme: TauScheme, instance: int, u: float) -> float:
    """Threshold ``tau_i(u)`` for one instance; raises on a bad index."""
    if not 0 <= instance < scheme.r:
        raise IndexError(f"instance {instance} out of range for r={scheme.r}")
    return float(scheme.maps[instance].value(validate_seed(u)))


@dataclass(frozen=True)
class Known:
    """Slot whose value was revealed by the sample."""

    value: float


@dataclass(frozen=True)
class Unknown:
    """Slot that was not sampled; the value is strictly below ``bound``."""

    bound: float


Slot = Union[Known, Unknown]


@dataclass(frozen=True)
class Outcome:
    """A seed plus per-instance slots; carries its scheme so estimators are
    self-contained (the seed and the threshold maps are always available to
    the estimator)."""

    seed: float
    slots: tuple[Slot, ...]
    scheme: TauScheme

    def __post_init__(self):
        validate_seed(self.seed)
        object.__setattr__(self, "slots", tuple(self.slots))
        if len(self.slots) != self.scheme.r:
            raise ValueError("slot count does not match scheme arity")
        for i, slot in enumerate(self.slots):
            t = self.scheme.maps[i].value(self.seed)
            if isinstance(slot, Known):
                if slot.value < t:
                    raise ValueError(
                        f"slot {i}: known value {slot.value} below threshold {t}"
                    )
            elif isinstance(slot, Unknown):
                if slot.bound != t:
                    raise ValueError(
                        f"slot {i}: unknown bound {slot.bound} != tau({self.seed}) = {t}"
                    )
            else:
                raise TypeError(f"slot {i}: expected Known or Unknown, got {slot!r}")

    @property
    def r(self) -> int:
        return len(self.slots)

    def known_indices(self) -> tuple[int, ...]:
        return tuple(i for i, s in enumerate(self.slots) if isinstance(s, Known))


def is_consistent(outcome: Outcome, candidate: Sequence[float], scheme: TauScheme | None = None) -> bool:
    """Whether ``candidate`` could have produced ``outcome``.

    Revealed slots must match exactly; unsampled slots constrain the
    candidate strictly below the recorded bound.
    """
    scheme = scheme if scheme is not None else outcome.scheme
    if len(candidate) != len(outcome.slots):
        raise ValueError(
            f"candidate has {len(candidate)} entries, outcome has {len(outcome.slots)}"
        )
    for z, slot in zip(candidate, outcome.slots):
        if isinstance(slot, Known):
            if z != slot.value:
                return False
        else:
            if not z < slot.bound:
                return False
    return True


@dataclass(frozen=True)
class InstanceSet:
    """Items with one value per instance: ids plus an (n_items, r) matrix."""

    item_ids: tuple[str, ...]
    matrix: np.ndarray

    def __post_init__(self):
        ids = tuple(str(i) for i in self.item_ids)
        object.__setattr__(self, "item_ids", ids)
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2:
            m = m.reshape(len(ids), -1)
        if m.shape[0] != len(ids):
            raise ValueError("matrix row count does not match item count")
        if len(set(ids)) != len(ids):
            raise ValueError("item ids must be unique")
        if m.size and (m < 0).any():
            raise ValueError("item values must be nonnegative")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def r(self) -> int:
        return int(self.matrix.shape[1])

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    def vector(self, item_id) -> tuple[float, ...]:
        idx = self.item_ids.index(str(item_id))
        return tuple(float(x) for x in self.matrix[idx])

    def rows(self) -> Iterable[tuple[str, tuple[float, ...]]]:
        for i, item in enumerate(self.item_ids):
            yield item, tuple(float(x) for x in self.matrix[i])
