from fractions import Fraction
from math import comb

import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from prefsignal.nulls import NullPMF, pmax_null, tau_null
from prefsignal.significance import (
    UndefinedTestError,
    binom_test,
    bonferroni,
    chisq_gof,
    histogram,
    pool_bins,
)


def fraction_pmf(n, q):
    return [comb(n, k) * q ** k * (1 - q) ** (n - k) for k in range(n + 1)]


@pytest.mark.parametrize("rate", [0.211, 0.5, 0.03])
def test_two_sided_binomial_matches_full_pmf_sum(rate):
    n = 80
    pmf = fraction_pmf(n, Fraction(rate))
    for k in range(n + 1):
        # exact-rational version of the minimum-likelihood rule
        expect = sum(q for q in pmf if q <= pmf[k] * Fraction(1 + 10 ** -7))
        got = binom_test(k, n, rate).p_value
        assert got == pytest.approx(float(min(expect, 1)), rel=1e-9, abs=1e-300)


def test_one_sided_binomial():
    pmf = fraction_pmf(80, Fraction(0.211))
    assert binom_test(5, 80, 0.211, "below").p_value == pytest.approx(float(sum(pmf[:6])), rel=1e-10)
    assert binom_test(25, 80, 0.211, "above").p_value == pytest.approx(float(sum(pmf[25:])), rel=1e-10)


def test_binomial_monotone_away_from_mode():
    ps = [binom_test(k, 80, 0.211).p_value for k in range(0, 17)]
    assert all(a <= b + 1e-15 for a, b in zip(ps, ps[1:]))
    ps = [binom_test(k, 80, 0.211).p_value for k in range(17, 81)]
    assert all(a >= b - 1e-15 for a, b in zip(ps, ps[1:]))


def test_binomial_input_checks():
    with pytest.raises(ValueError):
        binom_test(81, 80, 0.2)
    with pytest.raises(ValueError):
        binom_test(3, 80, 0.0)
    with pytest.raises(ValueError):
        binom_test(3, 80, 0.2, "sideways")


def test_pool_bins_tails_inward():
    assert pool_bins([1, 2, 30, 30, 3]) == [[0, 1, 2], [3, 4]]
    assert pool_bins([10, 10, 10]) == [[0], [1], [2]]
    # a thin centre bin joins its smaller neighbour
    assert pool_bins([20, 1, 10]) == [[0], [1, 2]]
    # both tails thin: lower merges first, the upper remnant then joins it
    assert pool_bins([4, 50, 4]) == [[0, 1, 2]]
    assert pool_bins([4, 50, 50, 4]) == [[0, 1], [2, 3]]


@given(st.lists(st.floats(0.0, 40.0), min_size=1, max_size=15))
def test_pool_bins_invariants(expected):
    groups = pool_bins(expected)
    assert [i for g in groups for i in g] == list(range(len(expected)))
    assert all(g == list(range(g[0], g[-1] + 1)) for g in groups)
    if len(groups) > 1:
        assert all(sum(expected[i] for i in g) >= 5 for g in groups)


def test_chisq_gof_against_scipy():
    null = tau_null(4)
    obs = [1, 8, 12, 20, 25, 20, 14]
    res = chisq_gof(obs, null)
    n = sum(obs)
    exp = [n * float(q) for q in null.probs]
    groups = pool_bins(exp)
    O = [sum(obs[i] for i in g) for g in groups]
    E = [sum(exp[i] for i in g) for g in groups]
    ref = stats.chisquare(O, E)
    assert res.statistic == pytest.approx(ref.statistic, rel=1e-12)
    assert res.p_value == pytest.approx(ref.pvalue, rel=1e-9)
    assert res.dof == len(groups) - 1
    assert res.to_json()["yates_correction"] is False


def test_chisq_gof_mapping_and_errors():
    null = pmax_null(5)
    a = chisq_gof({Fraction(3, 5): 200, Fraction(4, 5): 100, 1: 20}, null)
    b = chisq_gof([200, 100, 20], null)
    assert a.statistic == b.statistic
    with pytest.raises(UndefinedTestError):
        chisq_gof([3, 0, 0], null)
    with pytest.raises(ValueError):
        chisq_gof({Fraction(1, 2): 3}, null)
    with pytest.raises(UndefinedTestError):
        chisq_gof([0, 0, 0], null)


def test_histogram():
    null = pmax_null(5)
    assert histogram([Fraction(3, 5), Fraction(1), Fraction(3, 5)], null) == [2, 0, 1]
    with pytest.raises(ValueError):
        histogram([Fraction(1, 2)], null)


def test_chisq_exact_fit_p_one():
    null = NullPMF((Fraction(0), Fraction(1)), (Fraction(1, 2), Fraction(1, 2)), "closed-form")
    assert chisq_gof([50, 50], null).p_value == pytest.approx(1.0)


def test_bonferroni():
    out = bonferroni([0.01, 0.02, 0.0124], family_size=4, alpha=0.05)
    assert [a.reject for a in out] == [True, False, True]
    assert out[0].threshold == 0.0125
    with pytest.raises(ValueError):
        bonferroni([0.1], 0)
