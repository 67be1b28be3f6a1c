"""Null distributions of the agreement statistics under iid-uniform raters.

Exact nulls carry :class:`~fractions.Fraction` probabilities that sum to
exactly one. Monte-Carlo nulls carry float probabilities plus the seed,
sample count and RNG identifier needed to regenerate them.
"""

from __future__ import annotations

import itertools
import json
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb, factorial
from pathlib import Path
from typing import Any, Literal, Sequence

import numpy as np

from .ranks import (
    RankPanel,
    Ranking,
    T_denominator,
    T_numerator_array,
    TieError,
    cycle_indicator_array,
    panels_from_array,
    uniform_ranks,
)
from .rng import RNG_ALGORITHM, chunk_sizes, make_rng, require_seed, run_chunks

DEFAULT_ENUMERATION_BUDGET = 10**7
CACHE_ENV = "PREFSIGNAL_CACHE_DIR"

# stream namespaces so different samplers never share a Philox stream
_STREAM_T = 1
_STREAM_CYCLE = 2
_STREAM_MALLOWS = 3

Method = Literal["exact-enumeration", "closed-form", "monte-carlo"]


class EnumerationBudgetError(ValueError):
    pass


@dataclass(frozen=True)
class NullPMF:
    support: tuple[Fraction, ...]
    probs: tuple[Any, ...]  # Fraction for exact methods, float for monte-carlo
    method: Method
    mc_meta: dict | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if len(self.support) != len(self.probs):
            raise ValueError("support and probs differ in length")
        if any(b <= a for a, b in zip(self.support, self.support[1:])):
            raise ValueError("support must be strictly increasing")
        if any(q < 0 for q in self.probs):
            raise ValueError("negative probability")
        total = sum(self.probs)
        if self.method == "monte-carlo":
            if abs(float(total) - 1.0) > 1e-12:
                raise ValueError(f"probabilities sum to {total}")
        elif total != 1:
            raise ValueError(f"exact probabilities sum to {total}, not 1")

    @property
    def exact(self) -> bool:
        return self.method != "monte-carlo"

    def mean(self):
        return sum((v * q for v, q in zip(self.support, self.probs)), Fraction(0) if self.exact else 0.0)

    def prob(self, value) -> Any:
        value = Fraction(value)
        for v, q in zip(self.support, self.probs):
            if v == value:
                return q
        return Fraction(0) if self.exact else 0.0

    def as_dict(self) -> dict:
        return dict(zip(self.support, self.probs))

    def to_json(self) -> dict:
        meta = self.mc_meta or {}
        return {
            "support": [_frac_str(v) for v in self.support],
            "probs": [_frac_str(q) if isinstance(q, Fraction) else float(q) for q in self.probs],
            "method": self.method,
            "seed": meta.get("seed"),
            "n": meta.get("n"),
            "rng": meta.get("rng"),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "NullPMF":
        method = doc["method"]
        probs = tuple(Fraction(q) if isinstance(q, str) else float(q) for q in doc["probs"])
        meta = None
        if doc.get("seed") is not None or doc.get("n") is not None:
            meta = {"seed": doc.get("seed"), "n": doc.get("n"), "rng": doc.get("rng")}
        return cls(tuple(Fraction(v) for v in doc["support"]), probs, method, meta)


def _frac_str(x: Fraction) -> str:
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}"


def _from_counts(values: Sequence[Fraction], counts: Sequence[int], method: Method, meta=None) -> NullPMF:
    """PMF from integer counts; exact Fractions unless monte-carlo."""
    total = sum(counts)
    pairs = sorted((v, c) for v, c in zip(values, counts) if c)
    if method == "monte-carlo":
        probs = tuple(c / total for _, c in pairs)
        # absorb float round-off so the 1e-12 contract holds for any n
        drift = 1.0 - math.fsum(probs)
        if probs and abs(drift) > 1e-15:
            i = int(np.argmax(probs))
            probs = probs[:i] + (probs[i] + drift,) + probs[i + 1 :]
    else:
        probs = tuple(Fraction(c, total) for _, c in pairs)
    return NullPMF(tuple(v for v, _ in pairs), probs, method, meta)


# ---------------------------------------------------------------------------
# Kendall tau


def mahonian_counts(p: int) -> list[int]:
    """Number of permutations of ``p`` items with exactly i inversions, i = 0..C(p,2)."""
    if p < 1:
        raise ValueError("p must be positive")
    counts = [1]
    for n in range(2, p + 1):
        new = [0] * (len(counts) + n - 1)
        for i, c in enumerate(counts):
            for extra in range(n):
                new[i + extra] += c
        counts = new
    return counts


def tau_null(p: int) -> NullPMF:
    if p < 2:
        raise ValueError("p must be at least 2")
    P = comb(p, 2)
    counts = mahonian_counts(p)
    values = [Fraction(P - 2 * i, P) for i in range(len(counts))]
    return _from_counts(values, counts, "closed-form")


# ---------------------------------------------------------------------------
# per-prompt T


def _all_rank_vectors(p: int) -> np.ndarray:
    """All p! rank vectors, identity first."""
    return np.array(list(itertools.permutations(range(1, p + 1))), dtype=np.int64)


def _tau_numerator_matrix(perms: np.ndarray) -> np.ndarray:
    p = perms.shape[1]
    ii, jj = np.triu_indices(p, k=1)
    sgn = np.sign(perms[:, ii] - perms[:, jj])
    return sgn @ sgn.T


def _exact_T_chunk(p: int, R: int, start: int, stop: int) -> np.ndarray:
    perms = _all_rank_vectors(p)
    M = _tau_numerator_matrix(perms)
    nperm = len(perms)
    idx = np.arange(start, stop, dtype=np.int64)
    digits = np.unravel_index(idx, (nperm,) * (R - 1))
    # rater 0 is pinned to the identity (row 0 of perms)
    cols = [np.zeros_like(idx)] + list(digits)
    s = np.zeros(len(idx), dtype=np.int64)
    for a, b in itertools.combinations(range(R), 2):
        s += M[cols[a], cols[b]]
    D = T_denominator(p, R)
    return np.bincount(s + D, minlength=2 * D + 1)


def _mc_T_chunk(p: int, R: int, seed: int, chunk: int, size: int) -> np.ndarray:
    rng = make_rng(seed, _STREAM_T, chunk)
    s = T_numerator_array(uniform_ranks(rng, size, R, p))
    D = T_denominator(p, R)
    return np.bincount(s + D, minlength=2 * D + 1)


def T_null(
    p: int,
    R: int,
    mode: Literal["exact", "monte-carlo"] = "exact",
    seed: int | None = None,
    n: int | None = None,
    budget: int = DEFAULT_ENUMERATION_BUDGET,
    workers: int = 1,
) -> NullPMF:
    """Null PMF of the per-prompt mean pairwise tau.

    Exact mode pins rater 1 to the identity (T is invariant under a common
    relabelling of items) and enumerates the remaining ``(p!)^(R-1)`` rank
    tuples in fixed-size chunks.
    """
    if p < 2 or R < 2:
        raise ValueError("need p >= 2 and R >= 2")
    D = T_denominator(p, R)
    values = [Fraction(s - D, D) for s in range(2 * D + 1)]
    if mode == "exact":
        total = factorial(p) ** (R - 1)
        if total > budget:
            raise EnumerationBudgetError(
                f"exact T null at p={p}, R={R} needs {total:,} tuples, over the enumeration budget of {budget:,}"
            )
        step = 1 << 18
        parts = run_chunks(
            _exact_T_chunk, [(p, R, a, min(a + step, total)) for a in range(0, total, step)], workers
        )
        counts = np.sum(parts, axis=0)
        return _from_counts(values, [int(c) for c in counts], "exact-enumeration")
    if mode == "monte-carlo":
        seed = require_seed(seed)
        if n is None or n < 1:
            raise ValueError("monte-carlo mode needs a sample count n >= 1")
        sizes = chunk_sizes(n)
        parts = run_chunks(_mc_T_chunk, [(p, R, seed, c, s) for c, s in enumerate(sizes)], workers)
        counts = np.sum(parts, axis=0)
        meta = {"seed": seed, "n": n, "rng": RNG_ALGORITHM}
        return _from_counts(values, [int(c) for c in counts], "monte-carlo", meta)
    raise ValueError(f"unknown mode {mode!r}")


def cached_T_null(p: int, R: int, budget: int = DEFAULT_ENUMERATION_BUDGET, cache_dir: str | None = None) -> NullPMF:
    """Exact T null, read from / written to ``$PREFSIGNAL_CACHE_DIR`` when set."""
    cache_dir = cache_dir or os.environ.get(CACHE_ENV)
    path = Path(cache_dir) / f"T_null_p{p}_R{R}.json" if cache_dir else None
    if path is not None and path.exists():
        return NullPMF.from_json(json.loads(path.read_text()))
    pmf = T_null(p, R, "exact", budget=budget)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(pmf.to_json()))
    return pmf


# ---------------------------------------------------------------------------
# majority-vote probability


def pmax_null(R: int) -> NullPMF:
    """max(k, R-k)/R with k ~ Binomial(R, 1/2)."""
    if R < 2:
        raise ValueError("R must be at least 2")
    counts: dict[Fraction, int] = {}
    for k in range(R + 1):
        v = Fraction(max(k, R - k), R)
        counts[v] = counts.get(v, 0) + comb(R, k)
    vals = sorted(counts)
    return _from_counts(vals, [counts[v] for v in vals], "closed-form")


# ---------------------------------------------------------------------------
# Condorcet cycles


@dataclass(frozen=True)
class CycleNullRate:
    rate: float
    stderr: float
    cycles: int
    n: int
    seed: int
    rng: str = RNG_ALGORITHM

    def __iter__(self):
        return iter((self.rate, self.stderr))


def _mc_cycle_chunk(p: int, R: int, seed: int, chunk: int, size: int) -> int:
    rng = make_rng(seed, _STREAM_CYCLE, chunk)
    return int(cycle_indicator_array(uniform_ranks(rng, size, R, p)).sum())


def cycle_null_rate(p: int, R: int, seed: int | None, n: int, workers: int = 1) -> CycleNullRate:
    """Monte-Carlo frequency of a majority cycle among iid-uniform panels."""
    seed = require_seed(seed)
    if n < 1:
        raise ValueError("n must be at least 1")
    if R % 2 == 0:
        raise TieError("even R produces majority ties; cycle null rate is only defined here for odd R")
    if p < 3:
        return CycleNullRate(0.0, 0.0, 0, n, seed)
    sizes = chunk_sizes(n)
    cycles = sum(run_chunks(_mc_cycle_chunk, [(p, R, seed, c, s) for c, s in enumerate(sizes)], workers))
    rate = cycles / n
    return CycleNullRate(rate, math.sqrt(rate * (1 - rate) / n), cycles, n, seed)


# ---------------------------------------------------------------------------
# Mallows sampler


@dataclass(frozen=True)
class MallowsParams:
    center: Ranking
    theta: float

    def __post_init__(self) -> None:
        if not self.theta >= 0:
            raise ValueError(f"theta must be nonnegative, got {self.theta}")


def _insertion_cdfs(p: int, theta: float) -> list[np.ndarray]:
    out = []
    for i in range(p):
        # position j in 0..i; placing at j adds (i - j) inversions w.r.t. the center
        w = np.exp(-theta * (i - np.arange(i + 1)))
        out.append(np.cumsum(w / w.sum()))
    return out


def sample_mallows_ranks(params: MallowsParams, n: int, R: int, seed: int | None, stream: int = 0) -> np.ndarray:
    """``(n, R, p)`` rank tensor of iid Mallows draws by repeated insertion."""
    seed = require_seed(seed)
    p = params.center.p
    center_order = np.array(params.center.order())
    cdfs = _insertion_cdfs(p, params.theta)
    rng = make_rng(seed, _STREAM_MALLOWS, stream)
    m = n * R
    pos = np.zeros((m, p), dtype=np.int64)
    for i in range(p):
        u = rng.random(m)
        j = np.minimum(np.searchsorted(cdfs[i], u, side="right"), i)
        pos[:, :i] += pos[:, :i] >= j[:, None]
        pos[:, i] = j
    # pos[:, i] is the 0-based place of center_order[i]; ranks are place + 1
    ranks = np.empty_like(pos)
    ranks[:, center_order] = pos + 1
    return ranks.reshape(n, R, p)


def sample_mallows_panel(params: MallowsParams, p: int, R: int, seed: int | None, prompt_id: str = "prompt0") -> RankPanel:
    if p != params.center.p:
        raise ValueError(f"center ranks {params.center.p} items, requested p={p}")
    ranks = sample_mallows_ranks(params, 1, R, seed)
    panel = panels_from_array(ranks)[0]
    return RankPanel(prompt_id, panel.criterion, panel.raters, panel.rankings, panel.item_ids)


def mallows_probability(params: MallowsParams, ranking: Ranking) -> float:
    """Exact P(ranking) by brute-force normalisation over all p! permutations."""
    from .ranks import kendall_tau

    p = params.center.p
    P = comb(p, 2)

    def dist(r: Ranking) -> int:
        return int((1 - kendall_tau(r, params.center)) * P / 2)

    Z = sum(math.exp(-params.theta * dist(Ranking(perm))) for perm in itertools.permutations(range(1, p + 1)))
    return math.exp(-params.theta * dist(ranking)) / Z
