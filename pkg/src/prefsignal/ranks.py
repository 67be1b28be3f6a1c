"""Permutation arithmetic on strict rankings.

A :class:`Ranking` is stored as a rank vector: ``ranks[i]`` is the rank of
item ``i`` (1 = best). The order vector (items listed best first) is the
inverse permutation; :meth:`Ranking.from_order` and :meth:`Ranking.order`
convert between the two.

Scalar statistics (tau, T, p_max) are exact :class:`~fractions.Fraction`
values so that histograms line up with null supports bit for bit. The
``*_array`` helpers at the bottom operate on integer rank tensors of shape
``(..., R, p)`` and are what the Monte-Carlo code uses.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from typing import Hashable, Iterable, Literal, Mapping, Sequence

import numpy as np

TiePolicy = Literal["error", "exclude-triple", "count-as-no-cycle"]
TIE_POLICIES = ("error", "exclude-triple", "count-as-no-cycle")


class ShapeError(ValueError):
    pass


class TieError(ValueError):
    """Raised when a majority tournament has ties and no tie policy was chosen."""


@dataclass(frozen=True)
class Ranking:
    ranks: tuple[int, ...]

    def __post_init__(self) -> None:
        ranks = tuple(int(r) for r in self.ranks)
        object.__setattr__(self, "ranks", ranks)
        if len(ranks) < 2:
            raise ShapeError(f"a ranking needs at least 2 items, got {len(ranks)}")
        if sorted(ranks) != list(range(1, len(ranks) + 1)):
            raise ValueError(f"ranks must be a permutation of 1..{len(ranks)}, got {ranks}")

    @property
    def p(self) -> int:
        return len(self.ranks)

    @classmethod
    def from_order(cls, order: Sequence[int]) -> "Ranking":
        """Build from an order vector of 0-based item indices, best first."""
        ranks = [0] * len(order)
        for pos, item in enumerate(order):
            ranks[item] = pos + 1
        return cls(tuple(ranks))

    def order(self) -> tuple[int, ...]:
        """0-based item indices sorted best first."""
        return tuple(sorted(range(self.p), key=self.ranks.__getitem__))

    def relabel(self, perm: Sequence[int]) -> "Ranking":
        """Item ``i`` becomes item ``perm[i]``."""
        ranks = [0] * self.p
        for i, r in enumerate(self.ranks):
            ranks[perm[i]] = r
        return Ranking(tuple(ranks))


@dataclass(frozen=True)
class RankPanel:
    """All raters' strict rankings of the same ``p`` items for one prompt."""

    prompt_id: str
    criterion: str
    raters: tuple[str, ...]
    rankings: tuple[Ranking, ...]
    item_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "raters", tuple(self.raters))
        object.__setattr__(self, "rankings", tuple(self.rankings))
        object.__setattr__(self, "item_ids", tuple(self.item_ids))
        R, p = len(self.raters), len(self.item_ids)
        if R < 2:
            raise ShapeError(f"panel {self.prompt_id!r} needs at least 2 raters, got {R}")
        if len(self.rankings) != R:
            raise ShapeError(f"panel {self.prompt_id!r}: {R} raters but {len(self.rankings)} rankings")
        if len(set(self.raters)) != R:
            raise ValueError(f"panel {self.prompt_id!r}: duplicate rater ids")
        if len(set(self.item_ids)) != p:
            raise ValueError(f"panel {self.prompt_id!r}: duplicate item ids")
        for rk in self.rankings:
            if rk.p != p:
                raise ShapeError(f"panel {self.prompt_id!r}: ranking over {rk.p} items, expected {p}")

    @property
    def R(self) -> int:
        return len(self.raters)

    @property
    def p(self) -> int:
        return len(self.item_ids)

    @classmethod
    def from_orders(
        cls,
        prompt_id: str,
        criterion: str,
        orders: Mapping[str, Sequence[str]],
        item_ids: Sequence[str] | None = None,
    ) -> "RankPanel":
        """Build from ``{rater: [item ids, best first]}``.

        Item ids default to the sorted union of the listed items.
        """
        if item_ids is None:
            item_ids = sorted({it for order in orders.values() for it in order})
        index = {it: i for i, it in enumerate(item_ids)}
        rankings = []
        for rater, order in orders.items():
            if sorted(order) != sorted(item_ids):
                raise ValueError(
                    f"rater {rater!r} on prompt {prompt_id!r} ranks {list(order)}, expected items {list(item_ids)}"
                )
            rankings.append(Ranking.from_order([index[it] for it in order]))
        return cls(prompt_id, criterion, tuple(orders), tuple(rankings), tuple(item_ids))

    def rank_array(self) -> np.ndarray:
        """``(R, p)`` integer array of ranks."""
        return np.array([rk.ranks for rk in self.rankings], dtype=np.int64)

    def orders(self) -> dict[str, list[str]]:
        return {r: [self.item_ids[i] for i in rk.order()] for r, rk in zip(self.raters, self.rankings)}


@dataclass(frozen=True)
class PairTally:
    item_a: str
    item_b: str
    k: int  # raters placing item_a above item_b
    R: int

    def __post_init__(self) -> None:
        if not 0 <= self.k <= self.R:
            raise ValueError(f"tally k={self.k} outside [0, {self.R}]")


@dataclass(frozen=True)
class MajorityTournament:
    """Pairwise-majority directions; ``winners[(a, b)]`` is None for a tie."""

    item_ids: tuple[str, ...]
    winners: dict[tuple[str, str], str | None] = field(hash=False)

    @property
    def has_ties(self) -> bool:
        return any(w is None for w in self.winners.values())

    def beats(self, x: str, y: str) -> bool | None:
        key = (x, y) if (x, y) in self.winners else (y, x)
        w = self.winners[key]
        if w is None:
            return None
        return w == x


def kendall_tau(a: Ranking, b: Ranking) -> Fraction:
    """(concordant - discordant) / C(p, 2)."""
    if a.p != b.p:
        raise ShapeError(f"rankings over different item counts: {a.p} vs {b.p}")
    s = 0
    for i, j in itertools.combinations(range(a.p), 2):
        da = a.ranks[i] - a.ranks[j]
        db = b.ranks[i] - b.ranks[j]
        s += 1 if (da > 0) == (db > 0) else -1
    return Fraction(s, comb(a.p, 2))


def pairwise_taus(panel: RankPanel) -> list[Fraction]:
    return [kendall_tau(a, b) for a, b in itertools.combinations(panel.rankings, 2)]


def prompt_T(panel: RankPanel) -> Fraction:
    """Mean Kendall tau over all C(R, 2) rater pairs."""
    taus = pairwise_taus(panel)
    return sum(taus, Fraction(0)) / len(taus)


def pair_tallies(panel: RankPanel) -> list[PairTally]:
    out = []
    for i, j in itertools.combinations(range(panel.p), 2):
        k = sum(1 for rk in panel.rankings if rk.ranks[i] < rk.ranks[j])
        out.append(PairTally(panel.item_ids[i], panel.item_ids[j], k, panel.R))
    return out


def p_max(tally: PairTally) -> Fraction:
    frac = Fraction(tally.k, tally.R)
    return max(frac, 1 - frac)


def majority_tournament(panel: RankPanel) -> MajorityTournament:
    winners: dict[tuple[str, str], str | None] = {}
    for t in pair_tallies(panel):
        if 2 * t.k > t.R:
            winners[(t.item_a, t.item_b)] = t.item_a
        elif 2 * t.k < t.R:
            winners[(t.item_a, t.item_b)] = t.item_b
        else:
            winners[(t.item_a, t.item_b)] = None
    return MajorityTournament(panel.item_ids, winners)


def tournament_from_edges(item_ids: Sequence[str], edges: Iterable[tuple[str, str]]) -> MajorityTournament:
    """Tournament from ``(winner, loser)`` edges; missing pairs are ties."""
    item_ids = tuple(item_ids)
    index = {it: i for i, it in enumerate(item_ids)}
    winners: dict[tuple[str, str], str | None] = {
        (a, b): None for a, b in itertools.combinations(item_ids, 2)
    }
    for w, l in edges:
        key = (w, l) if index[w] < index[l] else (l, w)
        winners[key] = w
    return MajorityTournament(item_ids, winners)


def has_condorcet_cycle(t: MajorityTournament, tie_policy: TiePolicy = "error") -> bool:
    """True iff some item triple is intransitive under majority direction.

    ``tie_policy`` controls tournaments with tied pairs (even R):
    ``"error"`` raises :class:`TieError`; ``"exclude-triple"`` skips triples
    touching a tie and checks the rest; ``"count-as-no-cycle"`` returns
    False for any tournament containing a tie.
    """
    if tie_policy not in TIE_POLICIES:
        raise ValueError(f"unknown tie policy {tie_policy!r}")
    if t.has_ties:
        if tie_policy == "error":
            raise TieError("majority tournament has tied pairs; choose a tie_policy")
        if tie_policy == "count-as-no-cycle":
            return False
    for x, y, z in itertools.combinations(t.item_ids, 3):
        xy, yz, xz = t.beats(x, y), t.beats(y, z), t.beats(x, z)
        if xy is None or yz is None or xz is None:
            continue
        # each item wins exactly one of its two matches iff the triple is cyclic
        if xy == yz and xz != xy:
            return True
    return False


def is_total_order(t: MajorityTournament) -> bool:
    """True iff win counts are exactly 0..p-1 (transitive tournament)."""
    wins = {it: 0 for it in t.item_ids}
    for w in t.winners.values():
        if w is None:
            return False
        wins[w] += 1
    return sorted(wins.values()) == list(range(len(t.item_ids)))


# ---------------------------------------------------------------------------
# vectorised helpers over rank tensors of shape (..., R, p)


def pair_index(p: int) -> tuple[np.ndarray, np.ndarray]:
    ii, jj = np.triu_indices(p, k=1)
    return ii, jj


def pair_counts_array(ranks: np.ndarray) -> np.ndarray:
    """``k`` per item pair (i < j, row-major): raters ranking i above j. Shape (..., C(p,2))."""
    ranks = np.asarray(ranks)
    ii, jj = pair_index(ranks.shape[-1])
    above = ranks[..., ii] < ranks[..., jj]
    return above.sum(axis=-2)


def T_numerator_array(ranks: np.ndarray) -> np.ndarray:
    """Integer sum over rater pairs of (C - D); T = value / (C(R,2) * C(p,2)).

    Uses sum_{r<s} sgn_r * sgn_s = ((2k - R)^2 - R) / 2 per item pair.
    """
    R = np.asarray(ranks).shape[-2]
    k = pair_counts_array(ranks).astype(np.int64)
    return (((2 * k - R) ** 2 - R) // 2).sum(axis=-1)


def T_denominator(p: int, R: int) -> int:
    return comb(R, 2) * comb(p, 2)


def cycle_indicator_array(ranks: np.ndarray) -> np.ndarray:
    """Condorcet-cycle indicator per panel. Requires odd R."""
    ranks = np.asarray(ranks)
    R, p = ranks.shape[-2], ranks.shape[-1]
    if R % 2 == 0:
        raise TieError("vectorised cycle detection needs odd R; use has_condorcet_cycle with a tie policy")
    k = pair_counts_array(ranks)
    beats = 2 * k > R
    col = {pair: n for n, pair in enumerate(zip(*pair_index(p)))}
    out = np.zeros(ranks.shape[:-2], dtype=bool)
    for x, y, z in itertools.combinations(range(p), 3):
        xy, yz, xz = beats[..., col[(x, y)]], beats[..., col[(y, z)]], beats[..., col[(x, z)]]
        out |= (xy == yz) & (xz != xy)
    return out


def uniform_ranks(rng: np.random.Generator, n: int, R: int, p: int) -> np.ndarray:
    """``(n, R, p)`` iid-uniform rank vectors (values 1..p)."""
    base = np.broadcast_to(np.arange(1, p + 1, dtype=np.int64), (n * R, p))
    return rng.permuted(base, axis=1).reshape(n, R, p)


def panels_from_array(
    ranks: np.ndarray,
    criterion: str = "synthetic",
    item_ids: Sequence[str] | None = None,
    raters: Sequence[Hashable] | None = None,
) -> list[RankPanel]:
    ranks = np.asarray(ranks)
    n, R, p = ranks.shape
    item_ids = tuple(item_ids) if item_ids is not None else tuple(f"i{j}" for j in range(p))
    raters = tuple(str(r) for r in raters) if raters is not None else tuple(f"r{j}" for j in range(R))
    return [
        RankPanel(f"prompt{m}", criterion, raters, tuple(Ranking(tuple(row)) for row in ranks[m]), item_ids)
        for m in range(n)
    ]


@dataclass(frozen=True)
class PanelStatistics:
    """Per-prompt statistics of a set of same-shaped panels."""

    p: int
    R: int
    T: tuple[Fraction, ...]
    pmax: tuple[Fraction, ...]  # one per (prompt, item pair)
    cycles: tuple[bool, ...]

    @property
    def n(self) -> int:
        return len(self.T)

    @property
    def median_T(self) -> Fraction:
        s = sorted(self.T)
        mid = len(s) // 2
        return s[mid] if len(s) % 2 else (s[mid - 1] + s[mid]) / 2

    @property
    def mean_pair_tau(self) -> float:
        return float(sum(self.T, Fraction(0)) / self.n)

    @property
    def mean_pmax(self) -> float:
        return float(sum(self.pmax, Fraction(0)) / len(self.pmax))

    @property
    def cycle_count(self) -> int:
        return sum(self.cycles)

    @property
    def cycle_rate(self) -> float:
        return self.cycle_count / self.n


def panel_statistics(panels: Sequence[RankPanel], tie_policy: TiePolicy = "error") -> PanelStatistics:
    """T, p_max and cycle indicator for every panel; all panels must share (p, R)."""
    panels = list(panels)
    if not panels:
        raise ValueError("no panels")
    shapes = {(pn.p, pn.R) for pn in panels}
    if len(shapes) != 1:
        raise ShapeError(f"panels mix (p, R) shapes: {sorted(shapes)}")
    (p, R), = shapes
    ranks = np.stack([pn.rank_array() for pn in panels])
    D = T_denominator(p, R)
    T = tuple(Fraction(int(s), D) for s in T_numerator_array(ranks))
    k = pair_counts_array(ranks).ravel()
    pm = tuple(Fraction(max(int(x), R - int(x)), R) for x in k)
    if R % 2:
        cyc = tuple(bool(c) for c in cycle_indicator_array(ranks))
    else:
        cyc = tuple(has_condorcet_cycle(majority_tournament(pn), tie_policy) for pn in panels)
    return PanelStatistics(p, R, T, pm, cyc)
