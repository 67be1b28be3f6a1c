"""Readers and writers for the JSONL/CSV interchange formats."""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .agreement import FlagRecord
from .aggregation import PairwiseRecord
from .anchors import RatingRecord
from .judge import VerdictRecord
from .ranks import RankPanel


class InputError(ValueError):
    """Malformed or inconsistent input; carries the file and line when known."""

    def __init__(self, message: str, path: str | Path | None = None, line: int | None = None) -> None:
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)
        self.path, self.line = path, line


RANKING_FIELDS = ("criterion", "prompt_id", "rater_id", "ranking", "ranks")


def load_mapping(path: str | Path | None) -> dict[str, str]:
    """Field-name mapping ``{canonical name: name used in the file}``."""
    if path is None:
        return {}
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise InputError("mapping config must be a JSON object", path)
    return {str(k): str(v) for k, v in doc.items()}


def iter_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as e:
                raise InputError(f"invalid JSON ({e.msg})", path, lineno) from None
            if not isinstance(row, dict):
                raise InputError("each line must be a JSON object", path, lineno)
            yield lineno, row


def _get(row: dict, name: str, mapping: Mapping[str, str], path, lineno, required: bool = True):
    key = mapping.get(name, name)
    if key not in row:
        if required:
            raise InputError(f"missing field {key!r}", path, lineno)
        return None
    return row[key]


def load_rankings(path: str | Path, mapping: Mapping[str, str] | None = None) -> list[RankPanel]:
    """Panels from a rankings JSONL file, one row per (criterion, prompt, rater).

    A row carries either ``ranking`` (item ids, best first) or ``ranks``
    (item id -> rank, 1 = best). Within a criterion every prompt must have
    the same item count and rater count.
    """
    mapping = mapping or {}
    cells: dict[tuple[str, str], dict[str, list[str]]] = defaultdict(dict)
    first_line: dict[tuple[str, str], int] = {}
    for lineno, row in iter_jsonl(path):
        crit = str(_get(row, "criterion", mapping, path, lineno))
        prompt = str(_get(row, "prompt_id", mapping, path, lineno))
        rater = str(_get(row, "rater_id", mapping, path, lineno))
        order = _get(row, "ranking", mapping, path, lineno, required=False)
        ranks = _get(row, "ranks", mapping, path, lineno, required=False)
        if (order is None) == (ranks is None):
            raise InputError("row needs exactly one of 'ranking' or 'ranks'", path, lineno)
        if ranks is not None:
            if not isinstance(ranks, dict):
                raise InputError("'ranks' must map item id to rank", path, lineno)
            vals = sorted(ranks.values())
            if vals != list(range(1, len(vals) + 1)):
                raise InputError(f"ranks {vals} are not a strict ranking 1..{len(vals)}", path, lineno)
            order = sorted(ranks, key=ranks.__getitem__)
        if not isinstance(order, list) or len(order) < 2:
            raise InputError("'ranking' must list at least two item ids", path, lineno)
        order = [str(it) for it in order]
        if len(set(order)) != len(order):
            raise InputError("ranking repeats an item (tied or duplicate ranks are not accepted)", path, lineno)
        key = (crit, prompt)
        if rater in cells[key]:
            raise InputError(f"duplicate row for rater {rater!r} on {crit}/{prompt}", path, lineno)
        if cells[key]:
            expected = sorted(next(iter(cells[key].values())))
            if sorted(order) != expected:
                raise InputError(f"item set {sorted(order)} differs from {expected} for {crit}/{prompt}", path, lineno)
        cells[key][rater] = order
        first_line.setdefault(key, lineno)
    panels = []
    for (crit, prompt), orders in sorted(cells.items()):
        try:
            panels.append(RankPanel.from_orders(prompt, crit, {r: orders[r] for r in sorted(orders)}))
        except ValueError as e:
            raise InputError(str(e), path, first_line[(crit, prompt)]) from None
    check_shapes(panels)
    return panels


def check_shapes(panels: Iterable[RankPanel], p: int | None = None, R: int | None = None) -> dict[str, tuple[int, int]]:
    """Per-criterion (p, R); raises :class:`InputError` naming any criterion with mixed shapes."""
    shapes: dict[str, set[tuple[int, int]]] = defaultdict(set)
    for pn in panels:
        shapes[pn.criterion].add((pn.p, pn.R))
    out = {}
    for crit, s in sorted(shapes.items()):
        if len(s) > 1:
            raise InputError(f"criterion {crit!r} mixes (p, R) shapes {sorted(s)}")
        (cp, cR), = s
        if p is not None and cp != p:
            raise InputError(f"criterion {crit!r} has p={cp}, expected {p}")
        if R is not None and cR != R:
            raise InputError(f"criterion {crit!r} has R={cR}, expected {R}")
        out[crit] = (cp, cR)
    return out


def ranking_rows(panels: Iterable[RankPanel]) -> Iterator[dict]:
    for pn in panels:
        for rater, order in pn.orders().items():
            yield {"criterion": pn.criterion, "prompt_id": pn.prompt_id, "rater_id": rater, "ranking": order}


def write_jsonl(path: str | Path, rows: Iterable[dict]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
            n += 1
    return n


def write_rankings(path: str | Path, panels: Iterable[RankPanel]) -> int:
    return write_jsonl(path, ranking_rows(panels))


def load_pairwise(path: str | Path, mapping: Mapping[str, str] | None = None) -> list[PairwiseRecord]:
    mapping = mapping or {}
    out = []
    for lineno, row in iter_jsonl(path):
        vals = [str(_get(row, f, mapping, path, lineno)) for f in ("criterion", "prompt_id", "rater_id", "item_a", "item_b", "winner")]
        try:
            out.append(PairwiseRecord(*vals))
        except ValueError as e:
            raise InputError(str(e), path, lineno) from None
    return out


def load_verdicts(path: str | Path, mapping: Mapping[str, str] | None = None) -> list[VerdictRecord]:
    mapping = mapping or {}
    out = []
    for lineno, row in iter_jsonl(path):
        vals = [str(_get(row, f, mapping, path, lineno)) for f in ("judge_id", "criterion", "prompt_id", "model_a", "model_b", "order", "verdict")]
        pid = _get(row, "paraphrase_id", mapping, path, lineno, required=False)
        try:
            out.append(VerdictRecord(*vals, paraphrase_id=int(pid) if pid is not None else 0))
        except (TypeError, ValueError) as e:
            raise InputError(str(e), path, lineno) from None
    return out


def load_flags(path: str | Path, mapping: Mapping[str, str] | None = None) -> list[FlagRecord]:
    mapping = mapping or {}
    out = []
    for lineno, row in iter_jsonl(path):
        prompt, rater, item = (str(_get(row, f, mapping, path, lineno)) for f in ("prompt_id", "rater_id", "item_id"))
        flag = _get(row, "flag", mapping, path, lineno)
        if flag not in (0, 1, 2):
            raise InputError(f"flag must be 0, 1 or 2, got {flag!r}", path, lineno)
        out.append(FlagRecord(prompt, rater, item, int(flag)))
    return out


def load_rating_table(path: str | Path) -> list[RatingRecord]:
    """Generic ``user, item, value[, group]`` records from CSV (with header) or JSONL."""
    path = Path(path)
    out = []
    if path.suffix.lower() in (".csv", ".tsv"):
        delim = "\t" if path.suffix.lower() == ".tsv" else ","
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh, delimiter=delim)
            for lineno, row in enumerate(reader, 2):
                out.append(_rating(row, path, lineno))
    else:
        for lineno, row in iter_jsonl(path):
            out.append(_rating(row, path, lineno))
    return out


def _rating(row: Mapping, path, lineno) -> RatingRecord:
    for f in ("user", "item", "value"):
        if f not in row or row[f] in (None, ""):
            raise InputError(f"missing field {f!r}", path, lineno)
    try:
        value = float(row["value"])
    except (TypeError, ValueError):
        raise InputError(f"value {row['value']!r} is not numeric", path, lineno) from None
    return RatingRecord(str(row["user"]), str(row["item"]), value, str(row.get("group") or ""))


def write_csv(path: str | Path, header: list[str], rows: Iterable[Iterable]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
