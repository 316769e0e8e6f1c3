"""Traditional recognition scoring of free-text predictions: per-class
emotion/age accuracy and per-AU F1, under region-focal or full-face input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .errors import UnparseableLabelError
from .records import write_records
from .taxonomy import AGE_BINS, AU_VOCAB, EMOTIONS, parse_label


@dataclass(frozen=True)
class PredictionRecord:
    sample_id: str
    task: str  # AU | EMO | AGE
    condition: str  # region_focal | full_face
    raw_text: str


@dataclass
class ScoreTable:
    """Per-class scores in [0, 100]; None marks a class with no support.

    `average` is the unweighted mean over applicable classes only.
    """

    task: str
    condition: str
    per_class: dict[str, float | None]
    average: float
    support: dict[str, int] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)


def _accuracy_table(
    preds: Mapping[str, str | None],
    truths: Mapping[str, str],
    classes: Sequence[str],
    task: str,
    condition: str,
) -> ScoreTable:
    correct = {c: 0 for c in classes}
    total = {c: 0 for c in classes}
    for sid in sorted(truths):
        truth = truths[sid]
        total[truth] += 1
        if preds.get(sid) == truth:
            correct[truth] += 1

    per_class: dict[str, float | None] = {}
    applicable: list[float] = []
    for c in classes:
        if total[c] == 0:
            per_class[c] = None
            continue
        value = 100.0 * correct[c] / total[c]
        per_class[c] = value
        applicable.append(value)

    notes = []
    skipped = [c for c in classes if total[c] == 0]
    if skipped:
        notes.append(f"classes with no truth samples excluded from Avg: {', '.join(skipped)}")
    average = math.fsum(applicable) / len(applicable) if applicable else 0.0
    return ScoreTable(task, condition, per_class, average, dict(total), notes)


def score_emotion(
    preds: Mapping[str, str | None],
    truths: Mapping[str, str],
    condition: str = "region_focal",
) -> ScoreTable:
    """Per-class accuracy over the 7 emotions; unparsed counts as wrong."""
    return _accuracy_table(preds, truths, EMOTIONS, "EMO", condition)


def score_age(
    preds: Mapping[str, str | None],
    truths: Mapping[str, str],
    condition: str = "region_focal",
) -> ScoreTable:
    """Per-bin accuracy over the 12 age ranges; unparsed counts as wrong."""
    return _accuracy_table(preds, truths, AGE_BINS, "AGE", condition)


def score_au(
    preds: Mapping[str, frozenset[int] | None],
    truths: Mapping[str, frozenset[int]],
    condition: str = "region_focal",
) -> ScoreTable:
    """Per-AU binary F1 (2TP / (2TP + FP + FN)) with an unweighted macro mean.

    An AU absent from both predictions and truths has no defined F1 and is
    excluded from the macro mean (noted in the table). Unparsed predictions
    count as empty sets, so every truth AU of that sample becomes a miss.
    """
    tp = {a: 0 for a in AU_VOCAB}
    fp = {a: 0 for a in AU_VOCAB}
    fn = {a: 0 for a in AU_VOCAB}
    support = {a: 0 for a in AU_VOCAB}
    for sid in sorted(truths):
        truth = truths[sid]
        pred = preds.get(sid) or frozenset()
        for a in AU_VOCAB:
            in_t, in_p = a in truth, a in pred
            support[a] += int(in_t)
            if in_t and in_p:
                tp[a] += 1
            elif in_p:
                fp[a] += 1
            elif in_t:
                fn[a] += 1

    per_class: dict[str, float | None] = {}
    applicable: list[float] = []
    for a in AU_VOCAB:
        denom = 2 * tp[a] + fp[a] + fn[a]
        if denom == 0:
            per_class[f"AU{a}"] = None
            continue
        value = 100.0 * 2 * tp[a] / denom
        per_class[f"AU{a}"] = value
        applicable.append(value)

    notes = []
    skipped = [f"AU{a}" for a in AU_VOCAB if 2 * tp[a] + fp[a] + fn[a] == 0]
    if skipped:
        notes.append(
            f"AUs absent from both predictions and truths excluded from macro: {', '.join(skipped)}"
        )
    average = math.fsum(applicable) / len(applicable) if applicable else 0.0
    return ScoreTable("AU", condition, per_class, average, {f"AU{a}": support[a] for a in AU_VOCAB}, notes)


def parse_predictions(
    records: Sequence[PredictionRecord],
) -> tuple[dict[tuple[str, str], dict[str, object]], int]:
    """Parse each record's raw text exactly once.

    Returns predictions grouped by (task, condition) plus the count of
    unparseable records (each is kept as None and scores as wrong).
    """
    grouped: dict[tuple[str, str], dict[str, object]] = {}
    unparsed = 0
    for rec in records:
        bucket = grouped.setdefault((rec.task, rec.condition), {})
        try:
            bucket[rec.sample_id] = parse_label(rec.raw_text, rec.task)
        except UnparseableLabelError:
            bucket[rec.sample_id] = None
            unparsed += 1
    return grouped, unparsed


def evaluate_predictions(
    records: Sequence[PredictionRecord],
    truths: Mapping[str, Mapping[str, object]],  # task -> sample_id -> label
) -> list[ScoreTable]:
    """Score every (task, condition) group present in the records."""
    grouped, unparsed = parse_predictions(records)
    scorers = {"EMO": score_emotion, "AGE": score_age, "AU": score_au}
    tables = []
    for (task, condition) in sorted(grouped):
        truth_map = truths.get(task)
        if not truth_map:
            continue
        preds = grouped[(task, condition)]
        aligned = {sid: truth_map[sid] for sid in preds if sid in truth_map}
        table = scorers[task](preds, aligned, condition)
        if unparsed:
            table.notes.append(f"unparseable predictions across run: {unparsed}")
        tables.append(table)
    return tables


def write_score_report(tables: Sequence[ScoreTable], path_prefix: str | Path) -> None:
    prefix = Path(path_prefix)
    rows = [
        {
            "task": t.task,
            "condition": t.condition,
            "per_class": {k: (round(v, 4) if v is not None else None) for k, v in t.per_class.items()},
            "average": round(t.average, 4),
            "support": t.support,
            "notes": t.notes,
        }
        for t in tables
    ]
    write_records(prefix.with_suffix(".jsonl"), rows)

    lines = []
    for t in tables:
        lines.append(f"[{t.task} | {t.condition}]")
        for cls, value in t.per_class.items():
            shown = "   n/a" if value is None else f"{value:6.2f}"
            lines.append(f"  {cls:<10} {shown}")
        lines.append(f"  {'Avg':<10} {t.average:6.2f}")
        for note in t.notes:
            lines.append(f"  note: {note}")
        lines.append("")
    prefix.with_suffix(".txt").write_text("\n".join(lines))
