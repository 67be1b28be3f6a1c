"""Subsample large rating datasets into (p, R)-shaped reference panels."""

from __future__ import annotations

import json
import logging
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Iterator, Literal, Sequence

import numpy as np

from .ranks import RankPanel, Ranking, panel_statistics
from .rng import make_rng, require_seed, run_chunks

log = logging.getLogger(__name__)

ValueKind = Literal["scalar-rating", "full-ranking-position"]

_STREAM_ANCHOR = 4


@dataclass(frozen=True)
class RatingRecord:
    user: str
    item: str
    value: float
    group: str = ""  # e.g. the prompt, for per-prompt tables such as HPSv2


class RatingTable:
    """Sparse ``(group, user, item) -> value`` store.

    ``scalar-rating`` values rank higher-is-better; ``full-ranking-position``
    values rank lower-is-better.
    """

    def __init__(self, records: Iterable[RatingRecord], value_kind: ValueKind = "scalar-rating") -> None:
        if value_kind not in ("scalar-rating", "full-ranking-position"):
            raise ValueError(f"unknown value kind {value_kind!r}")
        self.value_kind = value_kind
        data: dict[str, dict[str, dict[str, float]]] = defaultdict(lambda: defaultdict(dict))
        for r in records:
            cell = data[str(r.group)][str(r.user)]
            if str(r.item) in cell:
                raise ValueError(f"duplicate value for user {r.user!r}, item {r.item!r}, group {r.group!r}")
            cell[str(r.item)] = float(r.value)
        self.data = {g: dict(users) for g, users in data.items()}

    @property
    def groups(self) -> list[str]:
        return sorted(self.data)

    def item_counts(self, group: str) -> Counter:
        return Counter(it for ratings in self.data[group].values() for it in ratings)


@dataclass(frozen=True)
class AnchorRecipe:
    name: str
    p: int
    R: int
    bootstrap_iterations: int
    panels_per_iteration: int | Literal["per-group"]
    subsets_per_panel: int
    seed: int
    item_pool_top: int | None = None  # restrict to the N most-rated items per group
    overlap: Literal["all-items"] = "all-items"
    fixed_items: tuple[str, ...] | None = None
    max_subset_redraws: int = 20
    max_rater_redraws: int = 100

    def __post_init__(self) -> None:
        require_seed(self.seed)
        counts = [self.p, self.R, self.bootstrap_iterations, self.subsets_per_panel]
        if self.panels_per_iteration != "per-group":
            counts.append(self.panels_per_iteration)
        if any(int(c) < 1 for c in counts):
            raise ValueError("recipe counts must be positive")
        if self.fixed_items is not None:
            object.__setattr__(self, "fixed_items", tuple(str(i) for i in self.fixed_items))
            if len(self.fixed_items) != self.p:
                raise ValueError(f"{len(self.fixed_items)} fixed items but p={self.p}")
        if self.overlap != "all-items":
            raise ValueError(f"unknown overlap rule {self.overlap!r}")

    @classmethod
    def from_json(cls, doc: dict | str | Path) -> "AnchorRecipe":
        if isinstance(doc, (str, Path)):
            doc = json.loads(Path(doc).read_text())
        return cls(**doc)

    def to_json(self) -> dict:
        d = asdict(self)
        if d["fixed_items"] is not None:
            d["fixed_items"] = list(d["fixed_items"])
        return d

    def expected_panels(self, n_groups: int = 1) -> int:
        per = n_groups if self.panels_per_iteration == "per-group" else self.panels_per_iteration
        return self.bootstrap_iterations * per * self.subsets_per_panel


@dataclass
class SubsampleCounters:
    emitted: int = 0
    skipped: int = 0
    tie_breaks: int = 0  # subsets where a rater's tie had to be broken at random
    subset_redraws: int = 0

    def merge(self, other: "SubsampleCounters") -> None:
        self.emitted += other.emitted
        self.skipped += other.skipped
        self.tie_breaks += other.tie_breaks
        self.subset_redraws += other.subset_redraws


def _rerank(values: np.ndarray, kind: ValueKind, rng: np.random.Generator, break_ties: bool) -> tuple[int, ...]:
    key = -values if kind == "scalar-rating" else values
    jitter = rng.random(len(values)) if break_ties else np.zeros(len(values))
    order = np.lexsort((jitter, key))
    ranks = np.empty(len(values), dtype=np.int64)
    ranks[order] = np.arange(1, len(values) + 1)
    return tuple(int(r) for r in ranks)


def _has_ties(mat: np.ndarray) -> bool:
    s = np.sort(mat, axis=1)
    return bool((np.diff(s, axis=1) == 0).any())


def _pool(table: RatingTable, group: str, recipe: AnchorRecipe) -> list[str]:
    if recipe.fixed_items is not None:
        return list(recipe.fixed_items)
    counts = table.item_counts(group)
    items = sorted(counts, key=lambda it: (-counts[it], it))
    if recipe.item_pool_top is not None:
        items = items[: recipe.item_pool_top]
    return sorted(items)


def iteration_panels(table: RatingTable, recipe: AnchorRecipe, iteration: int) -> tuple[list[RankPanel], SubsampleCounters]:
    """Panels of one bootstrap iteration, drawn from its own derived stream."""
    rng = make_rng(recipe.seed, _STREAM_ANCHOR, iteration)
    ctr = SubsampleCounters()
    out: list[RankPanel] = []
    groups = table.groups
    if recipe.panels_per_iteration == "per-group":
        panel_groups = groups
    else:
        panel_groups = [groups[int(g)] for g in rng.integers(len(groups), size=recipe.panels_per_iteration)] if len(groups) > 1 else groups * recipe.panels_per_iteration
    pools: dict[str, list[str]] = {}
    for pn, group in enumerate(panel_groups):
        if group not in pools:
            pools[group] = _pool(table, group, recipe)
        pool = pools[group]
        pool_set = set(pool)
        users_data = table.data[group]
        eligible = sorted(u for u, r in users_data.items() if len(pool_set.intersection(r)) >= recipe.p)
        if recipe.fixed_items is not None:
            eligible = [u for u in eligible if pool_set.issubset(users_data[u])]
        common: list[str] = []
        users: list[str] = []
        for _ in range(recipe.max_rater_redraws):
            if len(eligible) < recipe.R:
                break
            users = sorted(eligible[i] for i in rng.choice(len(eligible), size=recipe.R, replace=False))
            common = sorted(pool_set.intersection(*(users_data[u] for u in users)))
            if len(common) >= recipe.p:
                break
        if len(common) < recipe.p:
            ctr.skipped += recipe.subsets_per_panel
            continue
        for s in range(recipe.subsets_per_panel):
            if recipe.fixed_items is not None:
                items = list(recipe.fixed_items)
            else:
                items = sorted(common[i] for i in rng.choice(len(common), size=recipe.p, replace=False))
            mat = np.array([[users_data[u][it] for it in items] for u in users])
            redraws = 0
            while _has_ties(mat) and recipe.fixed_items is None and redraws < recipe.max_subset_redraws:
                redraws += 1
                items = sorted(common[i] for i in rng.choice(len(common), size=recipe.p, replace=False))
                mat = np.array([[users_data[u][it] for it in items] for u in users])
            ctr.subset_redraws += redraws
            tied = _has_ties(mat)
            ctr.tie_breaks += tied
            rankings = tuple(Ranking(_rerank(row, table.value_kind, rng, tied)) for row in mat)
            prompt = f"{recipe.name}/it{iteration}/panel{pn}/subset{s}" + (f"/{group}" if group else "")
            out.append(RankPanel(prompt, recipe.name, tuple(users), rankings, tuple(items)))
            ctr.emitted += 1
    return out, ctr


def subsample_panels(
    table: RatingTable,
    recipe: AnchorRecipe,
    counters: SubsampleCounters | None = None,
    workers: int = 1,
) -> Iterator[RankPanel]:
    """Stream every panel of ``recipe``; skips and tie breaks are tallied in ``counters``."""
    counters = counters if counters is not None else SubsampleCounters()
    if workers > 1:
        results = run_chunks(iteration_panels, [(table, recipe, i) for i in range(recipe.bootstrap_iterations)], workers)
        for panels, ctr in results:
            counters.merge(ctr)
            yield from panels
    else:
        for i in range(recipe.bootstrap_iterations):
            panels, ctr = iteration_panels(table, recipe, i)
            counters.merge(ctr)
            yield from panels
    if counters.skipped:
        log.info("%s: skipped %d subsets for insufficient rater overlap", recipe.name, counters.skipped)


@dataclass(frozen=True)
class TopSelection:
    top: tuple[int, ...]
    mean_ranks: np.ndarray
    next_index: int | None
    next_mean_rank: float | None

    @property
    def gap(self) -> float | None:
        if self.next_mean_rank is None:
            return None
        return self.next_mean_rank - float(self.mean_ranks[list(self.top)].max())


def hps_top4_selection(ranks: np.ndarray, exclude: Sequence[int] = (), k: int = 4) -> TopSelection:
    """The ``k`` columns with the lowest mean aggregated rank, ignoring ``exclude``.

    ``ranks`` is prompts x models; NaN marks a model absent on a prompt.
    """
    ranks = np.asarray(ranks, dtype=float)
    m = ranks.shape[1]
    keep = [j for j in range(m) if j not in set(exclude)]
    if len(keep) < k:
        raise ValueError(f"need at least {k} models after exclusions, got {len(keep)}")
    means = np.full(m, np.nan)
    means[keep] = np.nanmean(ranks[:, keep], axis=0)
    order = sorted(keep, key=lambda j: (means[j], j))
    top = tuple(sorted(order[:k]))
    nxt = order[k] if len(order) > k else None
    return TopSelection(top, means, nxt, None if nxt is None else float(means[nxt]))


@dataclass(frozen=True)
class AnchorStats:
    n: int
    median_T: float
    mean_pair_tau: float
    mean_pmax: float
    cycle_rate: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.median_T, self.mean_pair_tau, self.mean_pmax, self.cycle_rate)

    def to_json(self) -> dict:
        return asdict(self)


def anchor_stats(panels: Iterable[RankPanel], tie_policy="error") -> AnchorStats:
    st = panel_statistics(list(panels), tie_policy)
    return AnchorStats(st.n, float(st.median_T), st.mean_pair_tau, st.mean_pmax, st.cycle_rate)
