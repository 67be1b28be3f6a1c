"""End-to-end signal check: statistics, null tests and verdict per criterion."""

from __future__ import annotations

import datetime as _dt
import json
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from . import __version__
from .aggregation import ceilings_by_criterion
from .io import check_shapes, write_csv
from .nulls import (
    DEFAULT_ENUMERATION_BUDGET,
    CycleNullRate,
    EnumerationBudgetError,
    NullPMF,
    T_null,
    cached_T_null,
    cycle_null_rate,
    pmax_null,
)
from .ranks import RankPanel, panel_statistics
from .rng import RNG_ALGORITHM
from .significance import UndefinedTestError, binom_test, bonferroni, chisq_gof, histogram

SCHEMA_VERSION = "1.0"
DEFAULT_MC_SAMPLES = 200_000

DECISIONS = {
    "within_rater_ties": "rejected at ingestion",
    "majority_tie_policy": "error (odd R only; even-R cycle rates need an explicit policy)",
    "gof_test": "Pearson chi-squared, no Yates correction",
    "gof_pooling": "adjacent bins merged tails-inward until every expected count >= 5; lower tail first on ties",
    "gof_pvalue": "scipy.stats.chi2.sf (regularised upper incomplete gamma)",
    "binomial_two_sided": "minimum-likelihood: sum of outcome probabilities <= P(observed), relative slack 1e-7",
    "cycle_test_alpha": "unadjusted alpha",
    "multiple_comparisons": "Bonferroni over criteria x 2 GOF tests",
    "median_T": "conventional median; mean of the two middle values for an even prompt count",
    "T_null": "exact enumeration with rater 1 pinned to the identity; Monte-Carlo fallback above the budget",
    "rng": RNG_ALGORITHM,
    "pmax_null_mean_note": (
        "the folded-binomial p_max null at R=5 has mean 22/32 = 0.6875; a tabulated value of 0.625 for the "
        "iid-uniform anchor row is inconsistent with that PMF and is not used"
    ),
}


def build_nulls(
    p: int,
    R: int,
    seed: int,
    mc_samples: int = DEFAULT_MC_SAMPLES,
    budget: int = DEFAULT_ENUMERATION_BUDGET,
    workers: int = 1,
) -> tuple[NullPMF, NullPMF, CycleNullRate]:
    try:
        t_null = cached_T_null(p, R, budget)
    except EnumerationBudgetError:
        t_null = T_null(p, R, "monte-carlo", seed=seed, n=mc_samples, workers=workers)
    return t_null, pmax_null(R), cycle_null_rate(p, R, seed, mc_samples, workers)


def _frac(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


@dataclass
class CriterionResult:
    criterion: str
    doc: dict


def _verdict(gof_reject: bool, cycle_reject: bool, cycle_rate: float, null_rate: float) -> str:
    if cycle_reject and cycle_rate > null_rate:
        return "factional-warning"
    return "signal" if gof_reject else "no-signal"


def validate_panels(
    panels: Sequence[RankPanel],
    p: int | None = None,
    R: int | None = None,
    alpha: float = 0.05,
    seed: int = 0,
    mc_samples: int = DEFAULT_MC_SAMPLES,
    budget: int = DEFAULT_ENUMERATION_BUDGET,
    nulls: dict | None = None,
    workers: int = 1,
) -> dict:
    """Signal report for every criterion in ``panels``.

    ``nulls`` may map ``(p, R)`` to prebuilt ``(T null, p_max null, cycle
    rate)`` triples to skip recomputation.
    """
    shapes = check_shapes(panels, p, R)
    by_crit: dict[str, list[RankPanel]] = defaultdict(list)
    for pn in panels:
        by_crit[pn.criterion].append(pn)
    nulls = dict(nulls or {})
    for shape in sorted(set(shapes.values())):
        if shape not in nulls:
            nulls[shape] = build_nulls(*shape, seed=seed, mc_samples=mc_samples, budget=budget, workers=workers)
    family = 2 * len(by_crit)
    criteria = {}
    for crit in sorted(by_crit):
        cp, cR = shapes[crit]
        t_null, pm_null, cyc = nulls[(cp, cR)]
        st = panel_statistics(by_crit[crit])
        t_hist = histogram(st.T, t_null)
        pm_hist = histogram(st.pmax, pm_null)
        gofs = {}
        for name, hist, null in (("T_gof", t_hist, t_null), ("pmax_gof", pm_hist, pm_null)):
            try:
                res = chisq_gof(hist, null)
                adj = bonferroni([res.p_value], family, alpha)[0]
                gofs[name] = {**res.to_json(), "threshold": adj.threshold, "reject": adj.reject}
            except UndefinedTestError as e:
                gofs[name] = {"undefined": str(e), "reject": False}
        cycle_doc = None
        cycle_reject = False
        if cR % 2 and 0 < cyc.rate < 1:
            bt = binom_test(st.cycle_count, st.n, cyc.rate)
            cycle_reject = bt.p_value < alpha
            cycle_doc = {**bt.to_json(), "alpha": alpha, "reject": cycle_reject,
                         "side": "above" if st.cycle_rate > cyc.rate else "below" if st.cycle_rate < cyc.rate else "equal"}
        gof_reject = any(g["reject"] for g in gofs.values())
        doc = {
            "p": cp,
            "R": cR,
            "n_prompts": st.n,
            "median_T": _frac(st.median_T),
            "median_T_float": float(st.median_T),
            "mean_pair_tau": st.mean_pair_tau,
            "mean_pmax": st.mean_pmax,
            "cycle_count": st.cycle_count,
            "cycle_rate": st.cycle_rate,
            "T_histogram": {_frac(v): c for v, c in zip(t_null.support, t_hist)},
            "pmax_histogram": {_frac(v): c for v, c in zip(pm_null.support, pm_hist)},
            **gofs,
            "cycle_test": cycle_doc,
            "verdict": _verdict(gof_reject, cycle_reject, st.cycle_rate, cyc.rate),
        }
        if cR % 2:
            cl = ceilings_by_criterion(by_crit[crit])["per_criterion"][crit]
            doc["ceilings"] = {"mean_loo": cl.mean_loo, "cap": cl.cap, "bucket_fractions": list(cl.fractions)}
        criteria[crit] = doc
    null_docs = {
        f"p{sp}_R{sR}": {"T": t.to_json(), "pmax": pm.to_json(),
                          "cycle": {"rate": c.rate, "stderr": c.stderr, "cycles": c.cycles, "n": c.n, "seed": c.seed, "rng": c.rng}}
        for (sp, sR), (t, pm, c) in sorted(nulls.items()) if (sp, sR) in set(shapes.values())
    }
    return {
        "schema_version": SCHEMA_VERSION,
        "tool": {"name": "prefsignal", "version": __version__},
        "settings": {"alpha": alpha, "seed": seed, "mc_samples": mc_samples, "bonferroni_family": family,
                     "enumeration_budget": budget},
        "decisions": DECISIONS,
        "nulls": null_docs,
        "criteria": criteria,
        "metadata": {"generated_at": _dt.datetime.now(_dt.timezone.utc).isoformat()},
    }


def deterministic_part(report: dict) -> dict:
    return {k: v for k, v in report.items() if k != "metadata"}


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)


def report_markdown(report: dict) -> str:
    lines = [
        "# Preference-signal report",
        "",
        f"alpha = {report['settings']['alpha']}, Bonferroni family = {report['settings']['bonferroni_family']}, "
        f"seed = {report['settings']['seed']}",
        "",
        "| criterion | n | median T | mean pair-tau | mean p_max | cycle rate | T GOF p | p_max GOF p | cycle p | verdict |",
        "|---|---:|---:|---:|---:|---:|---:|---:|---:|---|",
    ]
    for crit, d in report["criteria"].items():
        def pv(g):
            return f"{g['p_value']:.3g}" if g and "p_value" in g else "n/a"
        lines.append(
            f"| {crit} | {d['n_prompts']} | {d['median_T_float']:+.3f} | {d['mean_pair_tau']:+.3f} | "
            f"{d['mean_pmax']:.3f} | {d['cycle_rate']:.3f} | {pv(d['T_gof'])} | {pv(d['pmax_gof'])} | "
            f"{pv(d['cycle_test'])} | {d['verdict']} |"
        )
    lines += ["", "## Conventions", ""]
    lines += [f"- **{k}**: {v}" for k, v in report["decisions"].items()]
    return "\n".join(lines) + "\n"


def write_report(report: dict, out: str | Path, formats: Iterable[str] = ("json", "md", "csv")) -> list[Path]:
    """Write ``<out>.json``, ``<out>.md`` and histogram CSVs next to ``out``."""
    out = Path(out)
    base = out.with_suffix("") if out.suffix in (".json", ".md") else out
    base.parent.mkdir(parents=True, exist_ok=True)
    written = []
    formats = set(formats)
    if "json" in formats:
        path = base.with_suffix(".json")
        path.write_text(report_json(report) + "\n", encoding="utf-8")
        written.append(path)
    if "md" in formats:
        path = base.with_suffix(".md")
        path.write_text(report_markdown(report), encoding="utf-8")
        written.append(path)
    if "csv" in formats:
        crits = report["criteria"]
        path = Path(f"{base}_T_histogram.csv")
        write_csv(path, ["criterion", "T", "count"],
                  ([c, v, n] for c, d in crits.items() for v, n in d["T_histogram"].items()))
        written.append(path)
        path = Path(f"{base}_pmax_histogram.csv")
        write_csv(path, ["criterion", "pmax", "count"],
                  ([c, v, n] for c, d in crits.items() for v, n in d["pmax_histogram"].items()))
        written.append(path)
        path = Path(f"{base}_cycles.csv")
        write_csv(path, ["criterion", "n_prompts", "cycle_count", "cycle_rate"],
                  ([c, d["n_prompts"], d["cycle_count"], d["cycle_rate"]] for c, d in crits.items()))
        written.append(path)
    return written
