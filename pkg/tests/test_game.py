import functools
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rankgame.errors import GuardError, ValidationError
from rankgame.game import (
    NO_RANK,
    GameConfig,
    activation_probability,
    allocate_ranks,
    check_rank_exclusivity,
    exact_rank_win_probabilities,
    n_strategies_bound,
    sample_profile,
    sample_value,
    simulate_ranks,
)


def cfg_for(k, n=1, p=0.5, cap=3, budgets=None):
    return GameConfig(
        n_subjects=n,
        n_admins=k,
        p=p,
        discounts=tuple(0.5**r for r in range(k)),
        budgets=budgets or (n * cap,) * k,
        max_bid=cap,
    )


def brute_force_rank_probabilities(column, p):
    """Independent oracle: sum over every permutation and success pattern per rank."""
    k = len(column)
    pa = [1 - (1 - p) ** b for b in column]

    @functools.lru_cache(maxsize=None)
    def walk(r, remaining):
        # win matrix conditional on reaching rank r with `remaining` admins left
        out = np.zeros((k, k))
        if r == k or not remaining:
            return out
        perms = list(itertools.permutations(remaining))
        for perm in perms:
            w = 1.0 / len(perms)
            for outcome in itertools.product((0, 1), repeat=len(perm)):
                pr = w
                for a, o in zip(perm, outcome):
                    pr *= pa[a] if o else 1 - pa[a]
                if pr == 0:
                    continue
                winner = next((a for a, o in zip(perm, outcome) if o), None)
                if winner is None:
                    out += pr * walk(r + 1, remaining)
                else:
                    out[winner, r] += pr
                    out += pr * walk(r + 1, tuple(a for a in remaining if a != winner))
        return out

    return walk(0, tuple(range(k)))


class TestConfig:
    def test_first_discount_must_be_one(self):
        with pytest.raises(ValidationError, match="alpha_1"):
            GameConfig(2, 2, 0.5, (0.9, 0.5), (1, 1))

    def test_rejects_discount_above_one(self):
        with pytest.raises(ValidationError):
            GameConfig(2, 2, 0.5, (1.0, 1.5), (1, 1))

    @pytest.mark.parametrize("p", [0.0, -0.1, 1.2])
    def test_rejects_bad_relevance(self, p):
        with pytest.raises(ValidationError):
            GameConfig(2, 1, p, (1.0,), (1,))

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            GameConfig(2, 2, 0.5, (1.0,), (1, 1))

    def test_geometric(self):
        cfg = GameConfig.geometric(3, 3, 0.5, 0.3, (1, 2, 3))
        assert cfg.discounts == pytest.approx((1.0, 0.3, 0.09))


class TestActivation:
    @pytest.mark.parametrize("bid,p,want", [(0, 0.3, 0.0), (1, 0.3, 0.3), (2, 0.5, 0.75)])
    def test_examples(self, bid, p, want):
        assert activation_probability(bid, p) == pytest.approx(want)

    def test_rejects_p_outside_unit_interval(self):
        with pytest.raises(ValidationError):
            activation_probability(1, 1.5)

    @given(st.floats(0.01, 0.9), st.integers(0, 6))
    def test_increasing_and_concave(self, p, b):
        f0, f1, f2 = (activation_probability(b + i, p) for i in range(3))
        assert f1 > f0
        assert f2 - f1 <= f1 - f0 + 1e-15


class TestExactOracle:
    def test_lone_bidder_retries(self):
        P = exact_rank_win_probabilities([1, 0], cfg_for(2))
        assert P[0] == pytest.approx([0.5, 0.25])
        assert P[1] == pytest.approx([0.0, 0.0])

    def test_all_zero(self):
        assert not exact_rank_win_probabilities([0, 0, 0], cfg_for(3)).any()

    @pytest.mark.parametrize("x", [1, 2, 3])
    def test_two_rank_closed_form(self, x):
        pbar = 0.5
        P = exact_rank_win_probabilities([x, 0], cfg_for(2))
        assert P[0].sum() == pytest.approx((1 - pbar**x) * (1 + pbar**x))

    @pytest.mark.parametrize("p", [0.3, 0.5, 0.9])
    def test_symmetric_pair(self, p):
        P = exact_rank_win_probabilities([1, 1], cfg_for(2, p=p))
        assert P[0, 0] == pytest.approx(p * (1 - p / 2))

    @given(
        st.integers(1, 4).flatmap(lambda k: st.lists(st.integers(0, 3), min_size=k, max_size=k)),
        st.sampled_from([0.3, 0.5, 0.9]),
    )
    @settings(max_examples=60, deadline=None)
    def test_matches_brute_force(self, column, p):
        k = len(column)
        P = exact_rank_win_probabilities(column, cfg_for(k, p=p))
        np.testing.assert_allclose(P, brute_force_rank_probabilities(column, p), atol=1e-12)
        assert np.all(P.sum(axis=1) <= 1 + 1e-12)
        assert np.all(P.sum(axis=0) <= 1 + 1e-12)

    @given(st.integers(1, 5), st.integers(1, 3), st.floats(0.05, 1.0))
    @settings(max_examples=40, deadline=None)
    def test_retry_semantics(self, k, b, p):
        column = [0] * k
        column[0] = b
        P = exact_rank_win_probabilities(column, cfg_for(k, p=p))
        pa = 1 - (1 - p) ** b
        assert P[0].sum() == pytest.approx(1 - (1 - pa) ** k)

    @given(
        st.integers(2, 4).flatmap(lambda k: st.lists(st.integers(0, 2), min_size=k, max_size=k)),
        st.sampled_from([0.3, 0.5, 0.9]),
    )
    @settings(max_examples=40, deadline=None)
    def test_first_rank_monotone_in_own_bid(self, column, p):
        k = len(column)
        cfg = cfg_for(k, p=p)
        base = exact_rank_win_probabilities(column, cfg)[0, 0]
        more = exact_rank_win_probabilities([column[0] + 1, *column[1:]], cfg)[0, 0]
        assert more >= base - 1e-12

    def test_guard(self):
        with pytest.raises(GuardError) as info:
            exact_rank_win_probabilities([1] * 7, cfg_for(7))
        assert info.value.guard == "exact_enumeration_limit"


class TestAllocation:
    def test_single_bernoulli(self):
        cfg = cfg_for(1)
        ranks = simulate_ranks([[1]], cfg, 20000, seed=3)
        freq = (ranks[:, 0, 0] == 1).mean()
        assert abs(freq - 0.5) < 4 * math.sqrt(0.25 / 20000)
        assert set(np.unique(ranks)) <= {NO_RANK, 1}

    def test_all_zero_column_gets_nothing(self):
        cfg = cfg_for(3, n=2)
        ranks = allocate_ranks([[0, 1], [0, 2], [0, 0]], cfg, rng_seed=1)
        assert np.all(ranks[:, 0] == NO_RANK)

    def test_deterministic(self):
        cfg = cfg_for(3, n=4)
        x = [[1, 2, 0, 1], [2, 1, 1, 0], [0, 1, 2, 2]]
        assert np.array_equal(allocate_ranks(x, cfg, 5), allocate_ranks(x, cfg, 5))
        assert np.array_equal(simulate_ranks(x, cfg, 100, 5), simulate_ranks(x, cfg, 100, 5))

    def test_rejects_over_cap(self):
        with pytest.raises(ValidationError):
            allocate_ranks([[4]], cfg_for(1), 0)

    def test_rejects_over_budget(self):
        cfg = cfg_for(1, n=2, budgets=(1,))
        with pytest.raises(ValidationError):
            allocate_ranks([[1, 1]], cfg, 0)

    @given(
        st.integers(1, 4).flatmap(
            lambda k: st.lists(st.lists(st.integers(0, 3), min_size=3, max_size=3),
                               min_size=k, max_size=k)
        ),
        st.integers(0, 2**32),
    )
    @settings(max_examples=50, deadline=None)
    def test_exclusivity_and_zero_bid_exclusion(self, bids, seed):
        k = len(bids)
        cfg = cfg_for(k, n=3)
        x = np.array(bids)
        for ranks in (allocate_ranks(x, cfg, seed), *simulate_ranks(x, cfg, 30, seed)):
            check_rank_exclusivity(ranks)
            assert np.all(ranks[x == 0] == NO_RANK)

    def test_loop_and_vectorized_agree_in_law(self):
        # the literal loop and the vectorized simulator use different streams, so
        # compare both against the exact oracle
        cfg = cfg_for(3, n=1, p=0.3)
        column = [2, 1, 1]
        P = exact_rank_win_probabilities(column, cfg)
        R = 4000
        loop = np.array([allocate_ranks([[c] for c in column], cfg, s)[:, 0] for s in range(R)])
        for a in range(3):
            for r in range(3):
                freq = (loop[:, a] == r + 1).mean()
                se = math.sqrt(P[a, r] * (1 - P[a, r]) / R)
                assert abs(freq - P[a, r]) <= 4 * se + 1e-12


class TestProfiles:
    def test_figure_example(self):
        prof = sample_profile([1, 3, 3, NO_RANK, 2], k=3)
        assert tuple(prof.counts) == (1, 1, 2)
        assert prof.total == 4

    def test_all_none(self):
        assert tuple(sample_profile([0, 0, 0], k=2).counts) == (0, 0)

    def test_single_admin_wins_all(self):
        cfg = GameConfig(4, 1, 1.0, (1.0,), (4,), 1)
        ranks = allocate_ranks([[1, 1, 1, 1]], cfg, 0)
        assert tuple(sample_profile(ranks, admin=0).counts) == (4,)

    def test_sample_value(self):
        assert sample_value((2, 3), (1.0, 0.5)) == pytest.approx(2.75)
        assert sample_value((0, 0), (1.0, 0.5)) == 0.0
        assert sample_value((1, 0, 0), (1.0, 0.2, 0.1)) == 1.0


def test_strategy_count_matches_enumeration():
    for n, budget, cap in [(3, 2, 2), (4, 3, 2), (2, 5, 3)]:
        brute = sum(1 for v in itertools.product(range(cap + 1), repeat=n) if sum(v) <= budget)
        assert n_strategies_bound(n, budget, cap) == brute
