"""Inter-rater structure: per-rater tau matrices and Krippendorff's alpha."""

from __future__ import annotations

import itertools
import string
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Literal, Sequence

import numpy as np

from .ranks import RankPanel, kendall_tau

Metric = Literal["ordinal", "nominal", "interval"]
Unit = Literal["item", "prompt"]


class UndefinedAlphaError(ValueError):
    pass


@dataclass(frozen=True)
class RaterAgreementMatrix:
    raters: tuple[str, ...]
    matrix: np.ndarray  # R x R mean tau, NaN on the diagonal
    overall: np.ndarray  # per-rater mean of its off-diagonal row
    n_prompts: int

    @property
    def most_disagreeing(self) -> tuple[str, str]:
        return self._extreme(np.nanargmin)

    @property
    def most_agreeing(self) -> tuple[str, str]:
        return self._extreme(np.nanargmax)

    def _extreme(self, fn) -> tuple[str, str]:
        # first occurrence in row-major upper-triangle order
        upper = np.where(np.triu(np.ones_like(self.matrix, dtype=bool), 1), self.matrix, np.nan)
        i, j = np.unravel_index(fn(upper), upper.shape)
        return self.raters[i], self.raters[j]


def rater_matrix(panels: Sequence[RankPanel]) -> RaterAgreementMatrix:
    """Mean pairwise tau between every two raters over one criterion's prompts."""
    panels = list(panels)
    if not panels:
        raise ValueError("no panels")
    raters = tuple(sorted(panels[0].raters))
    for panel in panels:
        if set(panel.raters) != set(raters):
            raise ValueError(
                f"prompt {panel.prompt_id!r} has raters {sorted(panel.raters)}, expected {list(raters)}"
            )
    R = len(raters)
    sums = defaultdict(Fraction)
    for panel in panels:
        by_id = dict(zip(panel.raters, panel.rankings))
        for a, b in itertools.combinations(range(R), 2):
            sums[a, b] += kendall_tau(by_id[raters[a]], by_id[raters[b]])
    M = np.full((R, R), np.nan)
    for (a, b), s in sums.items():
        M[a, b] = M[b, a] = float(s / len(panels))
    overall = np.nanmean(M, axis=1)
    return RaterAgreementMatrix(raters, M, overall, len(panels))


def _label(i: int) -> str:
    return string.ascii_uppercase[i] if i < 26 else str(i + 1)


def rank_raters(matrices: RaterAgreementMatrix | Sequence[RaterAgreementMatrix]) -> list[tuple[str, str, float]]:
    """``(label, rater_id, overall mean tau)`` ascending by overall mean.

    Several matrices over the same raters (one per criterion of a cohort)
    are averaged first. Ties keep the original id order.
    """
    if isinstance(matrices, RaterAgreementMatrix):
        matrices = [matrices]
    raters = matrices[0].raters
    for m in matrices:
        if m.raters != raters:
            raise ValueError("matrices cover different rater sets")
    overall = np.mean([m.overall for m in matrices], axis=0)
    order = sorted(range(len(raters)), key=lambda i: (overall[i], raters[i]))
    return [(_label(pos), raters[i], float(overall[i])) for pos, i in enumerate(order)]


# ---------------------------------------------------------------------------
# ordinal flags


@dataclass(frozen=True)
class FlagRecord:
    prompt_id: str
    rater_id: str
    item_id: str
    flag: int


@dataclass(frozen=True)
class OrdinalFlagMatrix:
    """Flags in {0, 1, 2} indexed by (prompt, item) unit and rater; NaN = missing."""

    units: tuple[tuple[str, str], ...]
    raters: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        v = self.values[~np.isnan(self.values)]
        if not np.isin(v, (0, 1, 2)).all():
            raise ValueError("flags must be 0, 1 or 2")
        if self.values.shape != (len(self.units), len(self.raters)):
            raise ValueError("values shape does not match units x raters")

    @classmethod
    def from_records(cls, records: Iterable[FlagRecord]) -> "OrdinalFlagMatrix":
        records = list(records)
        units = sorted({(r.prompt_id, r.item_id) for r in records})
        raters = sorted({r.rater_id for r in records})
        ui = {u: i for i, u in enumerate(units)}
        ri = {r: i for i, r in enumerate(raters)}
        vals = np.full((len(units), len(raters)), np.nan)
        for r in records:
            i, j = ui[(r.prompt_id, r.item_id)], ri[r.rater_id]
            if not np.isnan(vals[i, j]):
                raise ValueError(f"duplicate flag for unit {(r.prompt_id, r.item_id)} rater {r.rater_id!r}")
            vals[i, j] = r.flag
        return cls(tuple(units), tuple(raters), vals)

    def unit_values(self, unit: Unit = "item") -> list[list[float]]:
        rows = [list(row[~np.isnan(row)]) for row in self.values]
        if unit == "item":
            return rows
        if unit == "prompt":
            grouped: dict[str, list[float]] = defaultdict(list)
            for (prompt, _), vals in zip(self.units, rows):
                grouped[prompt].extend(vals)
            return [grouped[k] for k in sorted(grouped)]
        raise ValueError(f"unknown unit {unit!r}")


def coincidence_matrix(units: Sequence[Sequence[float]]) -> tuple[np.ndarray, np.ndarray]:
    """Coincidence matrix over the observed categories; units with < 2 values are dropped."""
    cats = np.array(sorted({v for u in units if len(u) >= 2 for v in u}))
    idx = {c: i for i, c in enumerate(cats)}
    o = np.zeros((len(cats), len(cats)))
    for u in units:
        m = len(u)
        if m < 2:
            continue
        counts = np.zeros(len(cats))
        for v in u:
            counts[idx[v]] += 1
        o += (np.outer(counts, counts) - np.diag(counts)) / (m - 1)
    return cats, o


def distance_matrix(cats: np.ndarray, marginals: np.ndarray, metric: Metric) -> np.ndarray:
    """Squared distance between categories.

    ordinal: ``(sum_{g=c..k} n_g - (n_c + n_k) / 2) ** 2`` over the coincidence
    marginals ``n_g``; interval: ``(c - k) ** 2``; nominal: ``[c != k]``.
    """
    K = len(cats)
    d = np.zeros((K, K))
    if metric == "nominal":
        return 1.0 - np.eye(K)
    if metric == "interval":
        return (cats[:, None] - cats[None, :]) ** 2
    if metric == "ordinal":
        cum = np.concatenate([[0.0], np.cumsum(marginals)])
        for c in range(K):
            for k in range(K):
                lo, hi = min(c, k), max(c, k)
                d[c, k] = (cum[hi + 1] - cum[lo] - (marginals[c] + marginals[k]) / 2) ** 2
        return d
    raise ValueError(f"unknown metric {metric!r}")


def krippendorff_alpha(flags: OrdinalFlagMatrix | Sequence[Sequence[float]], metric: Metric = "ordinal", unit: Unit = "item") -> float:
    """Krippendorff's alpha, ``1 - D_o / D_e``, from the coincidence matrix.

    ``flags`` is an :class:`OrdinalFlagMatrix` or a list of units, each the
    list of values it received (missing ratings simply absent).
    """
    units = flags.unit_values(unit) if isinstance(flags, OrdinalFlagMatrix) else [list(u) for u in flags]
    ratable = [u for u in units if len(u) >= 2]
    if len(ratable) < 2:
        raise UndefinedAlphaError("alpha needs at least 2 units with 2 or more ratings")
    cats, o = coincidence_matrix(ratable)
    n_c = o.sum(axis=1)
    n = n_c.sum()
    d = distance_matrix(cats, n_c, metric)
    D_o = (o * d).sum() / n
    D_e = (np.outer(n_c, n_c) * d).sum() / (n * (n - 1))
    if D_e == 0:
        raise UndefinedAlphaError("expected disagreement is zero (a single category); alpha undefined")
    return float(1 - D_o / D_e)


def split_profile(flags: OrdinalFlagMatrix) -> dict[str, float]:
    """Share of items whose distinct flags are exactly {No, Minor}, exactly {Minor, Major}, other splits, or unanimous."""
    counts = {"no_minor_only": 0, "minor_major_only": 0, "other": 0, "unanimous": 0}
    rows = [set(u) for u in flags.unit_values("item") if u]
    for s in rows:
        if len(s) == 1:
            counts["unanimous"] += 1
        elif s == {0, 1}:
            counts["no_minor_only"] += 1
        elif s == {1, 2}:
            counts["minor_major_only"] += 1
        else:
            counts["other"] += 1
    total = len(rows)
    if total == 0:
        raise ValueError("no rated items")
    return {k: v / total for k, v in counts.items()}


def major_rates(flags: OrdinalFlagMatrix, major: int = 2) -> dict[str, float]:
    """Per-rater share of their flags at the Major level."""
    out = {}
    for j, r in enumerate(flags.raters):
        col = flags.values[:, j]
        col = col[~np.isnan(col)]
        out[r] = float((col == major).mean()) if len(col) else float("nan")
    return out
