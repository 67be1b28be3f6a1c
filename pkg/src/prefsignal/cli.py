"""Command-line entry point: ``prefsignal <subcommand> ...``.

Exit codes: 0 the command ran (whatever the verdicts), 1 bad input,
2 a statistical procedure was undefined for the data.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .aggregation import aggregate_records, ceilings_by_criterion, soft_labels
from .agreement import (
    OrdinalFlagMatrix,
    UndefinedAlphaError,
    krippendorff_alpha,
    major_rates,
    rank_raters,
    rater_matrix,
    split_profile,
)
from .anchors import AnchorRecipe, RatingTable, SubsampleCounters, anchor_stats, subsample_panels
from .io import (
    InputError,
    load_flags,
    load_mapping,
    load_pairwise,
    load_rankings,
    load_rating_table,
    load_verdicts,
    write_csv,
    write_jsonl,
    write_rankings,
)
from .judge import majority_from_panels, score_judges
from .nulls import EnumerationBudgetError, T_null, cycle_null_rate, pmax_null, tau_null
from .report import DEFAULT_MC_SAMPLES, validate_panels, write_report
from .significance import UndefinedTestError

log = logging.getLogger("prefsignal")

EXIT_OK, EXIT_INPUT, EXIT_UNDEFINED = 0, 1, 2


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_validate(args) -> int:
    panels = load_rankings(args.rankings, load_mapping(args.mapping))
    report = validate_panels(panels, args.p, args.R, args.alpha, args.seed, args.mc_samples, args.budget,
                             workers=args.workers)
    formats = args.format or ["json", "md", "csv"]
    out = Path(args.out)
    for path in write_report(report, out / "report" if out.suffix == "" else out, formats):
        print(path)
    for crit, d in report["criteria"].items():
        print(f"{crit}: {d['verdict']}", file=sys.stderr)
    return EXIT_OK


def cmd_aggregate(args) -> int:
    records = load_pairwise(args.pairwise, load_mapping(args.mapping))
    summary = aggregate_records(records, args.epsilon)
    write_rankings(args.out, summary.panels)
    print(json.dumps({"cells": summary.n_cells, "intransitive": summary.n_intransitive,
                      "tie_broken": summary.n_tie_broken, "panels": len(summary.panels)}, sort_keys=True))
    return EXIT_OK


def cmd_nulls(args) -> int:
    if args.p is None or args.R is None:
        raise InputError("nulls needs --p and --R")
    if args.mode == "exact":
        t = T_null(args.p, args.R, "exact", budget=args.budget)
    else:
        t = T_null(args.p, args.R, "monte-carlo", seed=args.seed, n=args.mc_samples, workers=args.workers)
    bundle = {"p": args.p, "R": args.R, "tau": tau_null(args.p).to_json(), "T": t.to_json(),
              "pmax": pmax_null(args.R).to_json()}
    if args.R % 2:
        c = cycle_null_rate(args.p, args.R, args.seed, args.mc_samples, args.workers)
        bundle["cycle"] = {"rate": c.rate, "stderr": c.stderr, "cycles": c.cycles, "n": c.n, "seed": c.seed, "rng": c.rng}
    text = json.dumps(bundle, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(args.out)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_anchor(args) -> int:
    recipe = AnchorRecipe.from_json(args.recipe)
    if args.seed is not None:
        recipe = AnchorRecipe(**{**recipe.to_json(), "seed": args.seed})
    table = RatingTable(load_rating_table(args.table), args.value_kind)
    ctr = SubsampleCounters()
    panels = list(subsample_panels(table, recipe, ctr, workers=args.workers))
    out = _out_dir(args)
    write_rankings(out / f"{recipe.name}_rankings.jsonl", panels)
    doc = {"recipe": recipe.to_json(), "emitted": ctr.emitted, "skipped": ctr.skipped,
           "tie_breaks": ctr.tie_breaks, "subset_redraws": ctr.subset_redraws}
    if panels:
        doc["stats"] = anchor_stats(panels).to_json()
    _dump(out / f"{recipe.name}_anchor_stats.json", doc)
    print(json.dumps(doc.get("stats", {}), sort_keys=True))
    return EXIT_OK


def cmd_judge_score(args) -> int:
    verdicts = load_verdicts(args.verdicts, load_mapping(args.mapping))
    panels = load_rankings(args.rankings, load_mapping(args.rankings_mapping))
    scores = score_judges(verdicts, majority_from_panels(panels))
    out = _out_dir(args)
    _dump(out / "judge_scores.json", {j: s.to_json() for j, s in scores.items()})
    crits = sorted({c for s in scores.values() for c in s.per_criterion_acc})
    write_csv(out / "judge_accuracy_by_criterion.csv", ["criterion", *scores],
              ([c, *(f"{s.per_criterion_acc.get(c, float('nan')):.3f}" for s in scores.values())] for c in crits))
    write_csv(out / "judge_position_bias_by_criterion.csv", ["criterion", *scores],
              ([c, *(f"{s.per_criterion_position_bias.get(c, float('nan')):.3f}" for s in scores.values())] for c in crits))
    write_csv(out / "judge_diagnostics.csv",
              ["judge", "macro_acc", "macro_acc_pair_weighted", "position_bias", "conditional_acc", "paraphrase_sigma",
               "n_pairs", "n_tie_excluded"],
              ([j, s.macro_acc, s.macro_acc_pair_weighted, s.position_bias_rate, s.conditional_acc,
                s.paraphrase_sigma, s.n_pairs, s.n_tie_excluded] for j, s in scores.items()))
    for j, s in scores.items():
        print(f"{j}: macro={s.macro_acc:.3f} pos_bias={s.position_bias_rate:.3f}")
    return EXIT_OK


def cmd_agreement(args) -> int:
    panels = load_rankings(args.rankings, load_mapping(args.mapping))
    out = _out_dir(args)
    by_crit: dict[str, list] = {}
    for pn in panels:
        by_crit.setdefault(pn.criterion, []).append(pn)
    doc: dict = {"criteria": {}}
    for crit, pns in sorted(by_crit.items()):
        m = rater_matrix(pns)
        write_csv(out / f"heatmap_{crit}.csv", ["rater", *m.raters],
                  ([r, *("" if i == j else f"{m.matrix[i, j]:.6f}" for j in range(len(m.raters)))]
                   for i, r in enumerate(m.raters)))
        doc["criteria"][crit] = {
            "raters": list(m.raters),
            "overall_mean_tau": dict(zip(m.raters, m.overall.tolist())),
            "most_disagreeing": list(m.most_disagreeing),
            "most_agreeing": list(m.most_agreeing),
            "ranked": [{"label": lab, "rater": r, "mean_tau": v} for lab, r, v in rank_raters(m)],
        }
    if all(pn.R % 2 for pn in panels):
        ceil = ceilings_by_criterion(panels)
        doc["ceilings"] = {
            "per_criterion": {c: {"mean_loo": v.mean_loo, "cap": v.cap, "bucket_fractions": list(v.fractions)}
                              for c, v in ceil["per_criterion"].items()},
            **{k: {"mean_loo": ceil[k].mean_loo, "cap": ceil[k].cap, "bucket_fractions": list(ceil[k].fractions)}
               for k in ("pooled_pairs", "mean_of_criteria")},
        }
    if args.soft_labels:
        n = write_jsonl(args.soft_labels, (row for pn in panels for row in soft_labels(pn)))
        doc["soft_label_rows"] = n
    status = EXIT_OK
    if args.flags:
        flags = OrdinalFlagMatrix.from_records(load_flags(args.flags, load_mapping(args.flags_mapping)))
        fdoc = {"unit": args.unit, "split_profile": split_profile(flags), "major_rate_by_rater": major_rates(flags)}
        try:
            fdoc["alpha_ordinal"] = krippendorff_alpha(flags, "ordinal", args.unit)
            fdoc["alpha_nominal"] = krippendorff_alpha(flags, "nominal", args.unit)
        except UndefinedAlphaError as e:
            fdoc["alpha_error"] = str(e)
            status = EXIT_UNDEFINED
        fdoc["ordinal_distance"] = "squared cumulative-margin distance over the coincidence-matrix marginals"
        doc["flags"] = fdoc
    _dump(out / "agreement.json", doc)
    print(out / "agreement.json")
    return status


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--p", type=int, default=None, help="items per panel (checked against the data)")
    common.add_argument("--R", type=int, default=None, help="raters per panel (checked against the data)")
    common.add_argument("--seed", type=int, default=None, help="RNG seed (default 0; anchor defaults to the recipe seed)")
    common.add_argument("--alpha", type=float, default=0.05)
    common.add_argument("--mc-samples", type=int, default=DEFAULT_MC_SAMPLES)
    common.add_argument("--budget", type=int, default=10**7, help="exact-enumeration budget in rank tuples")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--out", default=None)
    common.add_argument("--format", action="append", choices=["json", "md", "csv"])
    common.add_argument("--mapping", default=None, help="JSON field-name mapping for the main input file")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="prefsignal", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate", parents=[common], help="signal check of a rankings file")
    s.add_argument("rankings")
    s.set_defaults(func=cmd_validate, out_default="prefsignal_report")

    s = sub.add_parser("aggregate", parents=[common], help="pairwise judgments -> rankings JSONL")
    s.add_argument("pairwise")
    s.add_argument("--epsilon", type=float, default=0.1)
    s.set_defaults(func=cmd_aggregate, out_default="rankings.jsonl")

    s = sub.add_parser("nulls", parents=[common], help="null distributions at (p, R)")
    s.add_argument("--mode", choices=["exact", "monte-carlo"], default="exact")
    s.set_defaults(func=cmd_nulls, out_default=None)

    s = sub.add_parser("anchor", parents=[common], help="subsample a rating table into reference panels")
    s.add_argument("table")
    s.add_argument("recipe")
    s.add_argument("--value-kind", choices=["scalar-rating", "full-ranking-position"], default="scalar-rating")
    s.set_defaults(func=cmd_anchor, out_default="anchor_out")

    s = sub.add_parser("judge-score", parents=[common], help="S1 scoring of dual-order judge verdicts")
    s.add_argument("verdicts")
    s.add_argument("rankings")
    s.add_argument("--rankings-mapping", default=None)
    s.set_defaults(func=cmd_judge_score, out_default="judge_out")

    s = sub.add_parser("agreement", parents=[common], help="per-rater agreement, ceilings and flag alpha")
    s.add_argument("rankings")
    s.add_argument("--flags", default=None)
    s.add_argument("--flags-mapping", default=None)
    s.add_argument("--unit", choices=["item", "prompt"], default="item")
    s.add_argument("--soft-labels", default=None, help="write per-pair soft labels JSONL here")
    s.set_defaults(func=cmd_agreement, out_default="agreement_out")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.out is None:
        args.out = args.out_default
    if args.seed is None and args.command != "anchor":
        args.seed = 0
    try:
        return args.func(args)
    except (InputError, FileNotFoundError, EnumerationBudgetError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as e:
        if isinstance(e, (UndefinedTestError, UndefinedAlphaError)):
            print(f"undefined: {e}", file=sys.stderr)
            return EXIT_UNDEFINED
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
