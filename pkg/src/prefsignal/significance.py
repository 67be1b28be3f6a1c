"""Goodness-of-fit and binomial tests against null distributions."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Literal, Mapping, Sequence

import numpy as np
from scipy import stats

from .nulls import NullPMF

Direction = Literal["two-sided", "below", "above"]

MIN_EXPECTED = 5.0
# relative slack when comparing outcome probabilities in the two-sided test
_REL_TOL = 1 + 1e-7


class UndefinedTestError(ValueError):
    pass


@dataclass(frozen=True)
class GofResult:
    statistic: float
    dof: int
    p_value: float
    pooled_bins: tuple[tuple[str, str], ...]  # (low, high) support value of each pooled bin
    n: int
    observed: tuple[int, ...]
    expected: tuple[float, ...]

    def to_json(self) -> dict:
        return {
            "statistic": self.statistic,
            "dof": self.dof,
            "p_value": self.p_value,
            "pooled_bins": [list(b) for b in self.pooled_bins],
            "n": self.n,
            "observed": list(self.observed),
            "expected": list(self.expected),
            "yates_correction": False,
        }


@dataclass(frozen=True)
class BinomResult:
    successes: int
    n: int
    null_rate: float
    p_value: float
    direction: Direction

    def to_json(self) -> dict:
        return {
            "successes": self.successes,
            "n": self.n,
            "null_rate": self.null_rate,
            "p_value": self.p_value,
            "direction": self.direction,
            "two_sided_method": "minimum-likelihood",
        }


def pool_bins(expected: Sequence[float], min_expected: float = MIN_EXPECTED) -> list[list[int]]:
    """Merge adjacent bins, tails inward, until every pooled expectation >= ``min_expected``.

    The under-filled group closest to either tail is merged into its inward
    neighbour first; equal distances resolve to the lower tail. A group at
    the exact centre merges with its smaller neighbour (lower on ties).
    Returns the list of original bin indices in each pooled group.
    """
    groups = [[i] for i in range(len(expected))]
    mass = [float(e) for e in expected]
    while len(groups) > 1:
        low = [g for g in range(len(groups)) if mass[g] < min_expected]
        if not low:
            break
        last = len(groups) - 1
        g = min(low, key=lambda g: (min(g, last - g), g))
        if g < last - g:
            other = g + 1
        elif g > last - g:
            other = g - 1
        else:
            other = g - 1 if mass[g - 1] <= mass[g + 1] else g + 1
        a, b = sorted((g, other))
        groups[a:b + 1] = [groups[a] + groups[b]]
        mass[a:b + 1] = [mass[a] + mass[b]]
    return groups


def histogram(values: Sequence, null: NullPMF) -> list[int]:
    """Counts of ``values`` on ``null.support``; values off the support are an error."""
    index = {v: i for i, v in enumerate(null.support)}
    counts = [0] * len(index)
    for v in values:
        try:
            counts[index[Fraction(v)]] += 1
        except KeyError:
            raise ValueError(f"observed value {v} is not in the null support") from None
    return counts


def chisq_gof(observed: Mapping | Sequence[int], null: NullPMF, min_expected: float = MIN_EXPECTED) -> GofResult:
    """Pearson chi-squared test of a histogram against ``null`` with low-count pooling.

    ``observed`` is either a count per null support point (same order) or a
    mapping ``{support value: count}``.
    """
    if isinstance(observed, Mapping):
        index = {v: i for i, v in enumerate(null.support)}
        counts = [0] * len(index)
        for v, c in observed.items():
            if Fraction(v) not in index:
                raise ValueError(f"observed value {v} is not in the null support")
            counts[index[Fraction(v)]] += int(c)
    else:
        counts = [int(c) for c in observed]
        if len(counts) != len(null.support):
            raise ValueError("observed histogram length differs from the null support")
    n = sum(counts)
    if n < 1:
        raise UndefinedTestError("empty histogram")
    expected = [n * float(q) for q in null.probs]
    groups = pool_bins(expected, min_expected)
    if len(groups) < 2:
        raise UndefinedTestError(f"only {len(groups)} pooled bin(s) at n={n}; chi-squared test undefined")
    O = np.array([sum(counts[i] for i in g) for g in groups], dtype=float)
    E = np.array([sum(expected[i] for i in g) for g in groups])
    stat = float(((O - E) ** 2 / E).sum())
    dof = len(groups) - 1
    pval = float(stats.chi2.sf(stat, dof))
    desc = tuple((str(null.support[g[0]]), str(null.support[g[-1]])) for g in groups)
    return GofResult(stat, dof, pval, desc, n, tuple(int(o) for o in O), tuple(float(e) for e in E))


def binom_test(successes: int, n: int, null_rate: float, direction: Direction = "two-sided") -> BinomResult:
    """Exact binomial test; two-sided p sums every outcome no likelier than the observed one."""
    if not 0 <= successes <= n:
        raise ValueError(f"successes={successes} outside [0, {n}]")
    if not 0 < null_rate < 1:
        raise ValueError("null_rate must lie strictly between 0 and 1")
    if direction == "below":
        p = stats.binom.cdf(successes, n, null_rate)
    elif direction == "above":
        p = stats.binom.sf(successes - 1, n, null_rate)
    elif direction == "two-sided":
        pmf = stats.binom.pmf(np.arange(n + 1), n, null_rate)
        p = pmf[pmf <= pmf[successes] * _REL_TOL].sum()
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return BinomResult(successes, n, float(null_rate), float(min(1.0, p)), direction)


@dataclass(frozen=True)
class Adjusted:
    p_value: float
    threshold: float
    reject: bool


def bonferroni(p_values: Sequence[float], family_size: int, alpha: float = 0.05) -> list[Adjusted]:
    if family_size < 1:
        raise ValueError("family_size must be at least 1")
    thr = alpha / family_size
    return [Adjusted(float(p), thr, bool(p < thr)) for p in p_values]
