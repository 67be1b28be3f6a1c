import itertools
import math
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest

from conftest import brute_tau
from prefsignal.nulls import (
    EnumerationBudgetError,
    MallowsParams,
    NullPMF,
    T_null,
    cached_T_null,
    cycle_null_rate,
    mahonian_counts,
    mallows_probability,
    pmax_null,
    sample_mallows_panel,
    sample_mallows_ranks,
    tau_null,
)
from prefsignal.ranks import Ranking, TieError
from prefsignal.rng import SeedRequiredError


def inversions(perm):
    return sum(perm[i] > perm[j] for i, j in itertools.combinations(range(len(perm)), 2))


@pytest.mark.parametrize("p", range(1, 7))
def test_mahonian_matches_enumeration(p):
    c = Counter(inversions(x) for x in itertools.permutations(range(p)))
    assert mahonian_counts(p) == [c[i] for i in range(p * (p - 1) // 2 + 1)]


def test_mahonian_four():
    assert mahonian_counts(4) == [1, 3, 5, 6, 5, 3, 1]


@pytest.mark.parametrize("p", [2, 3, 4, 5])
def test_tau_null_matches_enumeration(p):
    ident = tuple(range(1, p + 1))
    c = Counter(brute_tau(ident, x) for x in itertools.permutations(ident))
    n = math.factorial(p)
    null = tau_null(p)
    assert null.as_dict() == {v: Fraction(k, n) for v, k in c.items()}
    assert null.mean() == 0


def _brute_T_null(p, R):
    perms = list(itertools.permutations(range(1, p + 1)))
    tau = {(a, b): brute_tau(a, b) for a in perms for b in perms}
    c = Counter()
    for combo in itertools.product(perms, repeat=R):
        pairs = list(itertools.combinations(combo, 2))
        c[sum((tau[a, b] for a, b in pairs), Fraction(0)) / len(pairs)] += 1
    total = len(perms) ** R
    return {v: Fraction(k, total) for v, k in c.items()}


@pytest.mark.parametrize("p,R", [(2, 3), (3, 2), (3, 3), (3, 4), (4, 3)])
def test_T_null_exact_matches_unpinned_enumeration(p, R):
    null = T_null(p, R, "exact")
    assert null.as_dict() == _brute_T_null(p, R)
    assert null.method == "exact-enumeration"


def test_T_null_properties():
    null = T_null(4, 4, "exact")
    assert null.mean() == 0
    assert sum(null.probs) == 1
    assert max(null.support) == 1
    assert null.prob(1) == Fraction(1, 24 ** 3)


def test_T_null_budget():
    with pytest.raises(EnumerationBudgetError, match="budget of 1,000"):
        T_null(4, 5, "exact", budget=1000)


def test_T_null_mc_reproducible_and_worker_invariant():
    a = T_null(4, 5, "monte-carlo", seed=3, n=70_000)
    b = T_null(4, 5, "monte-carlo", seed=3, n=70_000, workers=2)
    c = T_null(4, 5, "monte-carlo", seed=4, n=70_000)
    assert a == b
    assert a != c
    assert a.mc_meta["seed"] == 3 and a.mc_meta["n"] == 70_000
    with pytest.raises(SeedRequiredError):
        T_null(4, 5, "monte-carlo", seed=None, n=10)


def test_null_json_round_trip(tmp_path):
    for null in (T_null(3, 4), pmax_null(5), tau_null(4), T_null(3, 5, "monte-carlo", seed=1, n=5000)):
        assert NullPMF.from_json(null.to_json()) == null
    first = cached_T_null(3, 5, cache_dir=str(tmp_path))
    assert (tmp_path / "T_null_p3_R5.json").exists()
    assert cached_T_null(3, 5, cache_dir=str(tmp_path)) == first


def test_nullpmf_validation():
    with pytest.raises(ValueError):
        NullPMF((Fraction(0), Fraction(1)), (Fraction(1, 2), Fraction(1, 3)), "closed-form")
    with pytest.raises(ValueError):
        NullPMF((Fraction(1), Fraction(0)), (Fraction(1, 2), Fraction(1, 2)), "closed-form")


@pytest.mark.parametrize("R", [2, 3, 4, 5, 6, 7])
def test_pmax_null_is_folded_binomial(R):
    null = pmax_null(R)
    expect = Counter()
    for k in range(R + 1):
        expect[Fraction(max(k, R - k), R)] += Fraction(math.comb(R, k), 2 ** R)
    assert null.as_dict() == dict(expect)


def test_pmax_null_R5():
    null = pmax_null(5)
    assert null.support == (Fraction(3, 5), Fraction(4, 5), Fraction(1))
    assert null.probs == (Fraction(20, 32), Fraction(10, 32), Fraction(2, 32))


def test_cycle_null_three_voters_three_items():
    # 12 of the 216 profiles are cyclic
    rate = cycle_null_rate(3, 3, seed=11, n=200_000)
    assert abs(rate.rate - 1 / 18) < 4 * rate.stderr


def test_cycle_null_contract():
    a = cycle_null_rate(4, 5, seed=5, n=40_000)
    assert a == cycle_null_rate(4, 5, seed=5, n=40_000, workers=3)
    rate, se = a
    assert 0 < rate < 1 and se > 0
    assert cycle_null_rate(2, 5, seed=5, n=100).rate == 0
    with pytest.raises(TieError):
        cycle_null_rate(4, 4, seed=5, n=100)
    with pytest.raises(SeedRequiredError):
        cycle_null_rate(4, 5, seed=None, n=100)


def test_mallows_probabilities_sum_to_one():
    params = MallowsParams(Ranking((2, 1, 4, 3)), 0.7)
    total = sum(mallows_probability(params, Ranking(x)) for x in itertools.permutations(range(1, 5)))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_mallows_theta_zero_is_uniform():
    ranks = sample_mallows_ranks(MallowsParams(Ranking((1, 2, 3)), 0.0), 60_000, 1, seed=0)
    c = Counter(tuple(r) for r in ranks[:, 0])
    assert len(c) == 6
    for k in c.values():
        assert abs(k / 60_000 - 1 / 6) < 4 * math.sqrt((1 / 6) * (5 / 6) / 60_000)


@pytest.mark.parametrize("center", [(1, 2, 3, 4), (3, 1, 4, 2)])
def test_mallows_sampler_matches_partition_function(center):
    params = MallowsParams(Ranking(center), 1.0)
    n = 60_000
    ranks = sample_mallows_ranks(params, n, 1, seed=9)[:, 0]
    c = Counter(tuple(int(v) for v in r) for r in ranks)
    for perm in itertools.permutations(range(1, 5)):
        q = mallows_probability(params, Ranking(perm))
        se = math.sqrt(q * (1 - q) / n)
        assert abs(c[perm] / n - q) < 4.5 * se


def test_mallows_panel_shape():
    pn = sample_mallows_panel(MallowsParams(Ranking((1, 2, 3, 4)), 0.8), 4, 5, seed=1, prompt_id="x")
    assert pn.prompt_id == "x" and pn.R == 5 and pn.p == 4
    with pytest.raises(ValueError):
        sample_mallows_panel(MallowsParams(Ranking((1, 2, 3)), 0.8), 4, 5, seed=1)
    with pytest.raises(ValueError):
        MallowsParams(Ranking((1, 2)), -1.0)
    a = sample_mallows_ranks(MallowsParams(Ranking((1, 2, 3, 4)), 0.8), 10, 5, seed=2)
    assert np.array_equal(a, sample_mallows_ranks(MallowsParams(Ranking((1, 2, 3, 4)), 0.8), 10, 5, seed=2))
