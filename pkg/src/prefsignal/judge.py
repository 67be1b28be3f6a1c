"""Scoring dual-order pairwise judge verdicts against a rater-panel majority.

Each pair is judged twice, once per display order. A pair scores 1 when
both verdicts pick the same content and it is the majority winner, 0 when
both pick the same non-majority content, and 0.5 when the two verdicts
pick different content (the judge followed the position, not the image).
Pairs whose panel majority is a tie are left out of every accuracy
denominator and counted separately.
"""

from __future__ import annotations

import json
import math
import re
import warnings
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Iterable, Literal, Mapping, Sequence

import numpy as np
from scipy import stats

from .ranks import RankPanel, pair_tallies

Order = Literal["AB", "BA"]
Verdict = Literal["first-position", "second-position"]

PairKey = tuple[str, str, frozenset]  # (criterion, prompt_id, {model_a, model_b})


class IncompleteVerdictsError(ValueError):
    pass


@dataclass(frozen=True)
class VerdictRecord:
    judge_id: str
    criterion: str
    prompt_id: str
    model_a: str
    model_b: str
    order: Order
    verdict: Verdict
    paraphrase_id: int = 0

    def __post_init__(self) -> None:
        if self.order not in ("AB", "BA"):
            raise ValueError(f"order must be AB or BA, got {self.order!r}")
        if self.verdict not in ("first-position", "second-position"):
            raise ValueError(f"verdict must be first-position or second-position, got {self.verdict!r}")
        if not 0 <= int(self.paraphrase_id) <= 7:
            raise ValueError(f"paraphrase_id must be in 0..7, got {self.paraphrase_id}")
        if self.model_a == self.model_b:
            raise ValueError("a pair needs two different models")

    @property
    def pair(self) -> PairKey:
        return (self.criterion, self.prompt_id, frozenset((self.model_a, self.model_b)))

    @property
    def shown_first(self) -> str:
        return self.model_a if self.order == "AB" else self.model_b

    @property
    def chosen(self) -> str:
        first = self.shown_first
        if self.verdict == "first-position":
            return first
        return self.model_b if first == self.model_a else self.model_a


@dataclass(frozen=True)
class DualVerdict:
    """Both orderings of one judged pair."""

    key: PairKey
    ab: VerdictRecord
    ba: VerdictRecord

    @property
    def consistent(self) -> bool:
        return self.ab.chosen == self.ba.chosen

    @property
    def position_locked(self) -> bool:
        return self.ab.verdict == self.ba.verdict and not self.consistent

    @property
    def paraphrase_id(self) -> int:
        return self.ab.paraphrase_id

    def weight(self, winner: str) -> float:
        if not self.consistent:
            return 0.5
        return 1.0 if self.ab.chosen == winner else 0.0


def pair_verdicts(verdicts: Iterable[VerdictRecord]) -> list[DualVerdict]:
    """Group one judge's verdicts into dual-order pairs; any missing order is an error."""
    grouped: dict[PairKey, dict[str, list[VerdictRecord]]] = defaultdict(lambda: defaultdict(list))
    judges = set()
    for v in verdicts:
        judges.add(v.judge_id)
        # orient the display order relative to the sorted model names
        lo = min(v.model_a, v.model_b)
        slot = "ab" if v.shown_first == lo else "ba"
        grouped[v.pair][slot].append(v)
    if len(judges) > 1:
        raise ValueError(f"verdicts from several judges: {sorted(judges)}")
    bad = []
    out = []
    for key in sorted(grouped, key=lambda k: (k[0], k[1], sorted(k[2]))):
        slots = grouped[key]
        if len(slots["ab"]) != 1 or len(slots["ba"]) != 1:
            bad.append((key[0], key[1], tuple(sorted(key[2])), len(slots["ab"]), len(slots["ba"])))
            continue
        out.append(DualVerdict(key, slots["ab"][0], slots["ba"][0]))
    if bad:
        shown = ", ".join(f"{c}/{p}/{m} ({a} + {b} orders)" for c, p, m, a, b in bad[:10])
        more = f" and {len(bad) - 10} more" if len(bad) > 10 else ""
        raise IncompleteVerdictsError(f"pairs without exactly one verdict per order: {shown}{more}")
    return out


def majority_from_panels(panels: Iterable[RankPanel]) -> dict[PairKey, str | None]:
    """Panel-majority winner per (criterion, prompt, pair); None marks a tie (k = R/2)."""
    out: dict[PairKey, str | None] = {}
    for panel in panels:
        for t in pair_tallies(panel):
            key = (panel.criterion, panel.prompt_id, frozenset((t.item_a, t.item_b)))
            if 2 * t.k == t.R:
                out[key] = None
            else:
                out[key] = t.item_a if 2 * t.k > t.R else t.item_b
    return out


@dataclass
class JudgeScore:
    judge_id: str
    macro_acc: float
    macro_acc_pair_weighted: float
    per_criterion_acc: dict[str, float]
    position_bias_rate: float
    per_criterion_position_bias: dict[str, float]
    conditional_acc: float | None
    paraphrase_sigma: float
    n_pairs: int
    n_tie_excluded: int
    per_paraphrase_acc: dict[str, dict[int, float]] = field(default_factory=dict)

    def to_json(self) -> dict:
        d = asdict(self)
        d["per_paraphrase_acc"] = {c: {str(k): v for k, v in m.items()} for c, m in self.per_paraphrase_acc.items()}
        return d


def _winner(majority: Mapping[PairKey, str | None], key: PairKey) -> str | None:
    try:
        return majority[key]
    except KeyError:
        raise KeyError(f"no panel majority for {key[0]}/{key[1]}/{sorted(key[2])}") from None


def position_bias_rate(verdicts: Iterable[VerdictRecord] | Sequence[DualVerdict]) -> float:
    """Share of pairs where the judge picked the same position in both orders."""
    pairs = _as_pairs(verdicts)
    if not pairs:
        raise ValueError("no verdict pairs")
    return sum(d.position_locked for d in pairs) / len(pairs)


def conditional_accuracy(verdicts: Iterable[VerdictRecord] | Sequence[DualVerdict], majority: Mapping[PairKey, str | None]) -> float:
    """Majority agreement over order-consistent pairs with a non-tied majority."""
    pairs = [d for d in _as_pairs(verdicts) if d.consistent]
    scored = [(d, w) for d in pairs if (w := _winner(majority, d.key)) is not None]
    if not scored:
        raise ValueError("no order-consistent, non-tied pairs; conditional accuracy undefined")
    return sum(d.ab.chosen == w for d, w in scored) / len(scored)


def paraphrase_sigma(acc_by_criterion: Mapping[str, Mapping[int, float]]) -> float:
    """Population std of per-paraphrase accuracy within each criterion, averaged over criteria."""
    if not acc_by_criterion:
        raise ValueError("no criteria")
    sigmas = []
    for crit, accs in acc_by_criterion.items():
        if len(accs) < 2:
            warnings.warn(f"criterion {crit!r} has a single paraphrase group; its sigma is 0", stacklevel=2)
            sigmas.append(0.0)
        else:
            sigmas.append(float(np.std(list(accs.values()))))
    return float(np.mean(sigmas))


def _as_pairs(verdicts) -> list[DualVerdict]:
    verdicts = list(verdicts)
    if verdicts and isinstance(verdicts[0], DualVerdict):
        return verdicts
    return pair_verdicts(verdicts)


def s1_score(verdicts: Iterable[VerdictRecord] | Sequence[DualVerdict], majority: Mapping[PairKey, str | None]) -> JudgeScore:
    pairs = _as_pairs(verdicts)
    if not pairs:
        raise ValueError("no verdict pairs")
    judge = pairs[0].ab.judge_id
    weights: dict[str, list[float]] = defaultdict(list)
    para: dict[str, dict[int, list[float]]] = defaultdict(lambda: defaultdict(list))
    locked: dict[str, list[bool]] = defaultdict(list)
    ties = 0
    for d in pairs:
        crit = d.key[0]
        locked[crit].append(d.position_locked)
        w = _winner(majority, d.key)
        if w is None:
            ties += 1
            continue
        weights[crit].append(d.weight(w))
        para[crit][d.paraphrase_id].append(d.weight(w))
    per_crit = {c: float(np.mean(ws)) for c, ws in sorted(weights.items())}
    if not per_crit:
        raise ValueError("every pair has a tied panel majority; accuracy undefined")
    all_w = [w for ws in weights.values() for w in ws]
    per_para = {c: {k: float(np.mean(v)) for k, v in sorted(m.items())} for c, m in sorted(para.items())}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sigma = paraphrase_sigma(per_para)
    try:
        cond = conditional_accuracy(pairs, majority)
    except ValueError:
        cond = None
    return JudgeScore(
        judge_id=judge,
        macro_acc=float(np.mean(list(per_crit.values()))),
        macro_acc_pair_weighted=float(np.mean(all_w)),
        per_criterion_acc=per_crit,
        position_bias_rate=position_bias_rate(pairs),
        per_criterion_position_bias={c: float(np.mean(v)) for c, v in sorted(locked.items())},
        conditional_acc=cond,
        paraphrase_sigma=sigma,
        n_pairs=len(pairs),
        n_tie_excluded=ties,
        per_paraphrase_acc=per_para,
    )


def score_judges(verdicts: Iterable[VerdictRecord], majority: Mapping[PairKey, str | None]) -> dict[str, JudgeScore]:
    by_judge: dict[str, list[VerdictRecord]] = defaultdict(list)
    for v in verdicts:
        by_judge[v.judge_id].append(v)
    return {j: s1_score(vs, majority) for j, vs in sorted(by_judge.items())}


_JSON_BLOCK = re.compile(r"```(?:json)?\s*(\{.*?\})\s*```", re.S)
_LETTER = re.compile(r"\b(?:image\s*)?([AB])\b", re.I)


def parse_verdict_text(text: str) -> Verdict | None:
    """Lenient extraction of an A/B answer from raw judge output.

    Looks for a JSON object (fenced or bare) with a letter value first, then
    falls back to the last standalone ``A``/``B`` token. Returns None when
    nothing usable is found.
    """
    candidates = _JSON_BLOCK.findall(text) or re.findall(r"\{[^{}]*\}", text)
    for blob in candidates:
        try:
            obj = json.loads(blob)
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            for v in obj.values():
                if isinstance(v, str) and v.strip().upper().removeprefix("IMAGE ").strip() in ("A", "B"):
                    letter = v.strip().upper()[-1]
                    return "first-position" if letter == "A" else "second-position"
    letters = _LETTER.findall(text)
    if letters:
        return "first-position" if letters[-1].upper() == "A" else "second-position"
    return None


# ---------------------------------------------------------------------------
# Spearman rank correlation


def _scaled_ranks(x: Sequence[float]) -> np.ndarray:
    """Average ranks times 2, so ties stay integral."""
    return np.rint(2 * stats.rankdata(x)).astype(np.int64)


def _exact_sum_distribution(a: np.ndarray, b: np.ndarray) -> dict[int, int]:
    """Counts of ``sum_i a[i] * b[perm(i)]`` over all n! permutations.

    Dynamic programme over the set of ``b`` entries already assigned; the
    i-th assigned entry pairs with ``a[i]``.
    """
    n = len(a)
    layer: dict[int, dict[int, int]] = {0: {0: 1}}
    for i in range(n):
        nxt: dict[int, dict[int, int]] = defaultdict(lambda: defaultdict(int))
        for mask, sums in layer.items():
            for j in range(n):
                if mask >> j & 1:
                    continue
                inc = int(a[i] * b[j])
                tgt = nxt[mask | 1 << j]
                for s, c in sums.items():
                    tgt[s + inc] += c
        layer = nxt
    return dict(layer[(1 << n) - 1])


def spearman_rho(
    x: Sequence[float], y: Sequence[float], method: Literal["auto", "exact", "t"] = "auto"
) -> tuple[float, float]:
    """Spearman rho with average ranks for ties and a two-sided p-value.

    ``auto`` uses the exact permutation distribution for n <= 10 and the
    Student-t approximation (n - 2 degrees of freedom) above that.
    """
    x, y = list(x), list(y)
    n = len(x)
    if n != len(y):
        raise ValueError("x and y differ in length")
    if n < 3:
        raise ValueError("need at least 3 paired observations")
    if any(v is None or (isinstance(v, float) and math.isnan(v)) for v in x + y):
        raise ValueError("missing values")
    if len(set(x)) == 1 or len(set(y)) == 1:
        raise ValueError("a constant sequence has no rank correlation")
    a, b = _scaled_ranks(x), _scaled_ranks(y)
    rho = float(np.corrcoef(a, b)[0, 1])
    if method == "auto":
        method = "exact" if n <= 10 else "t"
    if method == "t":
        if abs(rho) >= 1:
            return rho, 0.0
        t = rho * math.sqrt((n - 2) / (1 - rho * rho))
        return rho, float(2 * stats.t.sf(abs(t), n - 2))
    if method != "exact":
        raise ValueError(f"unknown method {method!r}")
    # rho is increasing in S = sum a*b; centre is n * mean(a) * mean(b) = n (n+1)^2 in scaled units
    centre = n * (n + 1) ** 2
    s_obs = int(a @ b)
    dev = abs(s_obs - centre)
    dist = _exact_sum_distribution(a, b)
    hits = sum(c for s, c in dist.items() if abs(s - centre) >= dev)
    return rho, hits / math.factorial(n)
