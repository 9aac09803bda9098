from __future__ import annotations

import numpy as np
import pytest
from scipy import stats

from coordest.model import (
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
    seeds_for_items,
    seeds_for_salts,
    tau_at,
)
from coordest.samplers import sample_item

from conftest import random_scheme, random_vector


class TestHashSeed:
    def test_deterministic(self):
        assert hash_seed("item-a", 42) == hash_seed("item-a", 42)
        assert hash_seed(17, 3) == hash_seed(17, 3)

    def test_range(self):
        us = seeds_for_items([str(i) for i in range(10_000)], salt=5)
        assert (us > 0.0).all() and (us <= 1.0).all()

    def test_salt_and_id_both_matter(self):
        assert hash_seed("a", 1) != hash_seed("a", 2)
        assert hash_seed("a", 1) != hash_seed("b", 1)

    @pytest.mark.parametrize("family", ["id{}", "key:{}"])
    def test_uniform_over_ids(self, family):
        # marginal uniformity at alpha = 0.01 over 1e5 distinct ids
        us = seeds_for_items([family.format(i) for i in range(100_000)], salt=99)
        assert stats.kstest(us, "uniform").pvalue > 0.01

    def test_uniform_over_salts(self):
        us = seeds_for_salts("some-item", np.arange(100_000, dtype=np.uint64))
        assert stats.kstest(us, "uniform").pvalue > 0.01

    def test_vectorised_paths_match_scalar(self):
        ids = [f"i{k}" for k in range(200)]
        salts = np.arange(200, dtype=np.uint64)
        by_items = seeds_for_items(ids, salt=7)
        for i, item in enumerate(ids):
            assert by_items[i] == hash_seed(item, 7)
        by_salts = seeds_for_salts("i0", salts)
        for s in range(200):
            assert by_salts[s] == hash_seed("i0", s)


class TestTauMaps:
    def test_pps_values(self):
        scheme = TauScheme.pps(4.0, r=1)
        assert tau_at(scheme, 0, 0.5) == 2.0
        assert tau_at(scheme, 0, 1.0) == 4.0

    def test_piecewise_linear_interpolation(self):
        m = PiecewiseLinearMap(((0.0, 0.0), (0.5, 1.0), (1.0, 4.0)))
        scheme = TauScheme((m,))
        assert tau_at(scheme, 0, 0.75) == 2.5

    def test_index_out_of_range(self):
        scheme = TauScheme.pps(4.0, r=2)
        with pytest.raises(IndexError):
            tau_at(scheme, 2, 0.5)

    def test_pwl_validation(self):
        with pytest.raises(ValueError):
            PiecewiseLinearMap(((0.0, 1.0), (1.0, 0.5)))  # decreasing
        with pytest.raises(ValueError):
            PiecewiseLinearMap(((0.1, 0.0), (1.0, 1.0)))  # does not start at 0

    def test_scheme_rejects_unreachable_low_values(self):
        # a map whose smallest threshold exceeds the domain floor could never
        # sample the smallest data values
        m = PiecewiseLinearMap(((0.0, 0.5), (1.0, 2.0)))
        with pytest.raises(ValueError):
            TauScheme((m,))
        TauScheme((m,), domain=Domain(lows=(0.5,)))  # fine once declared

    def test_crossings(self):
        assert PpsMap(4.0).crossings(1.0) == (0.25,)
        assert PpsMap(4.0).crossings(5.0) == ()
        m = PiecewiseLinearMap(((0.0, 0.0), (0.5, 1.0), (1.0, 4.0)))
        assert m.crossings(2.5) == (0.75,)


class TestOutcome:
    def test_known_below_threshold_rejected(self, scheme4):
        with pytest.raises(ValueError):
            Outcome(0.5, (Known(1.0), Known(3.0)), scheme4)

    def test_unknown_bound_must_match(self, scheme4):
        with pytest.raises(ValueError):
            Outcome(0.5, (Unknown(1.9), Known(3.0)), scheme4)

    def test_seed_domain(self, scheme4):
        with pytest.raises(ValueError):
            Outcome(0.0, (Unknown(0.0), Unknown(0.0)), scheme4)


class TestConsistency:
    @pytest.fixture()
    def outcome(self, scheme4):
        # seed 0.5: thresholds (2, 2); entry 2 revealed at 3, entry 1 bounded by 2
        return sample_item((1.0, 3.0), 0.5, scheme4)

    def test_matching_candidate(self, outcome):
        assert is_consistent(outcome, (1.9, 3.0))

    def test_strict_bound(self, outcome):
        assert not is_consistent(outcome, (2.0, 3.0))

    def test_known_mismatch(self, outcome):
        assert not is_consistent(outcome, (1.0, 2.9))

    def test_length_mismatch(self, outcome):
        with pytest.raises(ValueError):
            is_consistent(outcome, (1.0, 3.0, 0.0))

    def test_reconstruction(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            scheme = random_scheme(rng)
            v = random_vector(rng)
            u = float(rng.uniform(1e-6, 1.0))
            assert is_consistent(sample_item(v, u, scheme), v)

    def test_nesting(self):
        # smaller seeds reveal more and constrain the consistent set harder
        rng = np.random.default_rng(1)
        for _ in range(200):
            scheme = random_scheme(rng)
            v = random_vector(rng)
            u, rho = sorted(rng.uniform(1e-6, 1.0, size=2))
            fine = sample_item(v, u, scheme)
            coarse = sample_item(v, rho, scheme)
            assert set(coarse.known_indices()) <= set(fine.known_indices())
            z = random_vector(rng)
            if is_consistent(fine, z):
                assert is_consistent(coarse, z)

    def test_suffix_openness(self):
        # consistency extends to all larger seeds, and slightly to the left
        # when the unrevealed coordinates sit strictly below their bounds
        rng = np.random.default_rng(2)
        for _ in range(100):
            scheme = random_scheme(rng)
            v = random_vector(rng)
            rho = float(rng.uniform(0.05, 0.95))
            outcome = sample_item(v, rho, scheme)
            for x in np.linspace(rho, 1.0, 7):
                assert is_consistent(sample_item(v, float(x), scheme), v)
            margin = min(
                (s.bound - z for s, z in zip(outcome.slots, v) if isinstance(s, Unknown)),
                default=None,
            )
            if margin is not None and margin > 1e-3:
                eps = 1e-6
                assert is_consistent(sample_item(v, rho - eps, scheme), v)


class TestInstanceSet:
    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError):
            InstanceSet(("a", "a"), np.zeros((2, 2)))

    def test_negative_values_rejected(self):
        with pytest.raises(ValueError):
            InstanceSet(("a", "b"), np.array([[1.0, -0.5], [0.0, 0.0]]))

    def test_ragged_rows_rejected(self):
        with pytest.raises(ValueError):
            InstanceSet(("a", "b"), [[1.0, 2.0], [3.0]])

    def test_vector_lookup(self, demo_data):
        assert demo_data.vector("3") == (4.0, 1.0)
        assert demo_data.r == 2
        assert demo_data.n_items == 8
