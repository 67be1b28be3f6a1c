"""Pairwise judgments to rankings, agreement buckets, and accuracy ceilings."""

from __future__ import annotations

import itertools
from collections import Counter, defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Literal, Sequence

import numpy as np

from .ranks import RankPanel, Ranking, pair_tallies, p_max

Bucket = Literal["unanimous", "majority", "split"]

DEFAULT_EPSILON = 0.1
BT_TOL = 1e-10
BT_MAX_ITER = 10_000
# relative gap below which two BT strengths count as tied
STRENGTH_TIE_RTOL = 1e-8


class MissingPairsError(ValueError):
    pass


@dataclass(frozen=True)
class PairwiseRecord:
    criterion: str
    prompt_id: str
    rater_id: str
    item_a: str
    item_b: str
    winner: str

    def __post_init__(self) -> None:
        if self.item_a == self.item_b:
            raise ValueError(f"record compares {self.item_a!r} with itself")
        if self.winner not in (self.item_a, self.item_b):
            raise ValueError(f"winner {self.winner!r} is neither {self.item_a!r} nor {self.item_b!r}")

    @property
    def loser(self) -> str:
        return self.item_b if self.winner == self.item_a else self.item_a


@dataclass(frozen=True)
class BTFit:
    item_ids: tuple[str, ...]
    strengths: np.ndarray  # geometric mean 1
    converged: bool
    iterations: int

    def strength(self, item: str) -> float:
        return float(self.strengths[self.item_ids.index(item)])


def win_matrix(outcomes: Iterable[tuple[str, str]], item_ids: Sequence[str]) -> np.ndarray:
    """``W[i, j]`` = times item i beat item j, from ``(winner, loser)`` pairs."""
    index = {it: i for i, it in enumerate(item_ids)}
    W = np.zeros((len(item_ids), len(item_ids)))
    for w, l in outcomes:
        W[index[w], index[l]] += 1
    return W


def bt_fit_matrix(
    wins: np.ndarray,
    epsilon: float = DEFAULT_EPSILON,
    item_ids: Sequence[str] | None = None,
    tol: float = BT_TOL,
    max_iter: int = BT_MAX_ITER,
) -> BTFit:
    """Bradley-Terry MLE by minorize-maximize updates.

    ``epsilon`` pseudo-wins are added to every ordered pair of distinct
    items, which keeps the MLE finite when an item never loses.
    """
    W = np.asarray(wins, dtype=float)
    p = W.shape[0]
    if W.shape != (p, p) or p < 2:
        raise ValueError(f"win matrix must be square with p >= 2, got {W.shape}")
    item_ids = tuple(item_ids) if item_ids is not None else tuple(str(i) for i in range(p))
    games = W + W.T
    np.fill_diagonal(games, 0)
    idle = [item_ids[i] for i in range(p) if games[i].sum() == 0]
    if idle:
        raise ValueError(f"items without any comparison: {idle}")
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    Wr = W + epsilon * (1 - np.eye(p))
    np.fill_diagonal(Wr, 0)
    N = Wr + Wr.T
    w = Wr.sum(axis=1)
    s = np.ones(p)
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        denom = (N / (s[:, None] + s[None, :])).sum(axis=1)
        new = w / denom
        new /= np.exp(np.log(new).mean())
        change = np.max(np.abs(new - s) / s)
        s = new
        if change < tol:
            converged = True
            break
    return BTFit(item_ids, s, converged, it)


def bt_fit(records: Iterable[PairwiseRecord], epsilon: float = DEFAULT_EPSILON, item_ids: Sequence[str] | None = None) -> BTFit:
    records = list(records)
    if item_ids is None:
        item_ids = sorted({r.item_a for r in records} | {r.item_b for r in records})
    return bt_fit_matrix(win_matrix(((r.winner, r.loser) for r in records), item_ids), epsilon, item_ids)


@dataclass(frozen=True)
class AggregatedRanking:
    ranking: Ranking
    item_ids: tuple[str, ...]
    order: tuple[str, ...]  # best first
    tie_broken: bool
    intransitive: bool
    fit: BTFit


def _has_cyclic_triple(W: np.ndarray) -> bool:
    beats = W > W.T
    for i, j, k in itertools.combinations(range(W.shape[0]), 3):
        if beats[i, j] and beats[j, k] and beats[k, i]:
            return True
        if beats[j, i] and beats[k, j] and beats[i, k]:
            return True
    return False


def pairwise_to_ranking(
    records: Iterable[PairwiseRecord],
    item_ids: Sequence[str] | None = None,
    epsilon: float = DEFAULT_EPSILON,
) -> AggregatedRanking:
    """Strict ranking for one (prompt, rater) by descending BT strength.

    Strength ties (relative gap under 1e-8) are broken by position in
    ``item_ids`` and flagged via ``tie_broken``.
    """
    records = list(records)
    if item_ids is None:
        item_ids = sorted({r.item_a for r in records} | {r.item_b for r in records})
    item_ids = tuple(item_ids)
    seen = Counter(frozenset((r.item_a, r.item_b)) for r in records)
    dupes = [tuple(sorted(k)) for k, c in seen.items() if c > 1]
    if dupes:
        raise ValueError(f"pairs judged more than once: {dupes}")
    missing = [(a, b) for a, b in itertools.combinations(item_ids, 2) if frozenset((a, b)) not in seen]
    if missing:
        raise MissingPairsError(f"missing pairwise judgments: {missing}")
    W = win_matrix(((r.winner, r.loser) for r in records), item_ids)
    fit = bt_fit_matrix(W, epsilon, item_ids)
    s = fit.strengths
    order_idx = sorted(range(len(item_ids)), key=lambda i: (-s[i], i))
    tie = any(
        abs(s[a] - s[b]) <= STRENGTH_TIE_RTOL * max(s[a], s[b]) for a, b in zip(order_idx, order_idx[1:])
    )
    # sort again treating near-equal strengths as equal so id order decides
    if tie:
        groups: list[list[int]] = []
        for i in order_idx:
            if groups and abs(s[groups[-1][0]] - s[i]) <= STRENGTH_TIE_RTOL * max(s[groups[-1][0]], s[i]):
                groups[-1].append(i)
            else:
                groups.append([i])
        order_idx = [i for g in groups for i in sorted(g)]
    return AggregatedRanking(
        Ranking.from_order(order_idx),
        item_ids,
        tuple(item_ids[i] for i in order_idx),
        tie,
        _has_cyclic_triple(W),
        fit,
    )


def ranking_to_records(panel: RankPanel) -> list[PairwiseRecord]:
    """Every rater's C(p,2) implied pairwise outcomes."""
    out = []
    for rater, rk in zip(panel.raters, panel.rankings):
        for i, j in itertools.combinations(range(panel.p), 2):
            a, b = panel.item_ids[i], panel.item_ids[j]
            out.append(PairwiseRecord(panel.criterion, panel.prompt_id, rater, a, b, a if rk.ranks[i] < rk.ranks[j] else b))
    return out


@dataclass
class AggregationSummary:
    panels: list[RankPanel]
    n_cells: int
    n_intransitive: int
    n_tie_broken: int


def aggregate_records(records: Iterable[PairwiseRecord], epsilon: float = DEFAULT_EPSILON) -> AggregationSummary:
    """Collapse pairwise records into one RankPanel per (criterion, prompt)."""
    cells: dict[tuple[str, str], dict[str, list[PairwiseRecord]]] = defaultdict(lambda: defaultdict(list))
    for r in records:
        cells[(r.criterion, r.prompt_id)][r.rater_id].append(r)
    panels = []
    n_cells = n_intr = n_tie = 0
    for (criterion, prompt), by_rater in sorted(cells.items()):
        item_ids = sorted({it for recs in by_rater.values() for r in recs for it in (r.item_a, r.item_b)})
        orders = {}
        for rater in sorted(by_rater):
            agg = pairwise_to_ranking(by_rater[rater], item_ids, epsilon)
            n_cells += 1
            n_intr += agg.intransitive
            n_tie += agg.tie_broken
            orders[rater] = list(agg.order)
        panels.append(RankPanel.from_orders(prompt, criterion, orders, item_ids))
    return AggregationSummary(panels, n_cells, n_intr, n_tie)


# ---------------------------------------------------------------------------
# agreement buckets and ceilings


@dataclass(frozen=True)
class PairBucket:
    item_a: str
    item_b: str
    votes: tuple[int, int]
    bucket: Bucket
    loo: Fraction


def bucket_of(v_a: int, v_b: int) -> Bucket:
    R = v_a + v_b
    hi = max(v_a, v_b)
    if hi == R:
        return "unanimous"
    if hi == R - 1:
        return "majority"
    return "split"


def bucketize(panel: RankPanel) -> list[PairBucket]:
    if panel.R % 2 == 0:
        raise ValueError(f"agreement buckets need odd R, panel {panel.prompt_id!r} has R={panel.R}")
    out = []
    for t in pair_tallies(panel):
        v = (t.k, t.R - t.k)
        out.append(PairBucket(t.item_a, t.item_b, v, bucket_of(*v), Fraction(max(v), t.R)))
    return out


@dataclass(frozen=True)
class Ceilings:
    mean_loo: float
    cap: float
    fractions: tuple[float, float, float]  # unanimous, majority, split


def cap_from_fractions(f_unanimous: float, f_majority: float, f_split: float) -> float:
    return f_unanimous + f_majority + 0.5 * f_split


def ceilings(buckets: Sequence[PairBucket]) -> Ceilings:
    if not buckets:
        raise ValueError("no pairs")
    n = len(buckets)
    cnt = Counter(b.bucket for b in buckets)
    fr = (cnt["unanimous"] / n, cnt["majority"] / n, cnt["split"] / n)
    mean_loo = float(sum((b.loo for b in buckets), Fraction(0)) / n)
    return Ceilings(mean_loo, cap_from_fractions(*fr), fr)


def ceilings_by_criterion(panels: Iterable[RankPanel]) -> dict:
    """Per-criterion ceilings plus the two corpus-level poolings.

    ``pooled_pairs`` weights every pair equally; ``mean_of_criteria``
    averages the per-criterion values with equal weight per criterion.
    """
    by: dict[str, list[PairBucket]] = defaultdict(list)
    for panel in panels:
        by[panel.criterion].extend(bucketize(panel))
    per = {c: ceilings(b) for c, b in sorted(by.items())}
    allb = [b for bs in by.values() for b in bs]
    pooled = ceilings(allb)
    k = len(per)
    mean_of = Ceilings(
        sum(c.mean_loo for c in per.values()) / k,
        sum(c.cap for c in per.values()) / k,
        tuple(sum(c.fractions[i] for c in per.values()) / k for i in range(3)),
    )
    return {"per_criterion": per, "pooled_pairs": pooled, "mean_of_criteria": mean_of}


def soft_labels(panel: RankPanel) -> list[dict]:
    """Per-pair training targets: empirical win rate of item_a and its agreement weight."""
    return [
        {
            "criterion": panel.criterion,
            "prompt_id": panel.prompt_id,
            "item_a": t.item_a,
            "item_b": t.item_b,
            "win_rate": t.k / t.R,
            "agreement_weight": float(p_max(t)),
        }
        for t in pair_tallies(panel)
    ]
