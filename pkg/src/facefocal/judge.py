"""Judge orchestration: annotation generation, the pairwise and panel
scoring protocols, verdict parsing, and metric aggregation.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .client import ChatClient, run_batch, user_message
from .errors import EmptyReportError, EndpointError, FaceFocalError
from .prompting import JUDGE_CRITERIA, TemplateRegistry, render_judge_prompt, stable_u64
from .records import write_records

FORMAT_REMINDER = (
    "Your previous reply could not be parsed. Repeat only the machine-readable "
    "block: a [scores] line, then for each caption a candidate=<label> line "
    "followed by one <criterion>=<value> line for each of Cls, Det, Flu, Box, Sem."
)


class VerdictParseError(FaceFocalError):
    pass


_CAND_LINE = re.compile(r"^\s*candidate\s*[=:]\s*(\S+)\s*$", re.IGNORECASE | re.MULTILINE)
_SCORE_LINE = re.compile(
    r"^\s*(Cls|Det|Flu|Box|Sem)\s*[=:]\s*(-?\d+(?:\.\d+)?)\s*$",
    re.IGNORECASE | re.MULTILINE,
)


def parse_verdict_block(text: str, labels: Sequence[str]) -> tuple[dict[str, dict[str, float]], bool]:
    """Pull per-candidate metric scores from the reply tail.

    Returns (scores by label, clamped?) where out-of-range values are
    clamped into [0, 100] and flagged. Raises VerdictParseError when any
    label or metric is missing.
    """
    events: list[tuple[int, str, str, float | None]] = []
    for m in _CAND_LINE.finditer(text):
        events.append((m.start(), "cand", m.group(1), None))
    for m in _SCORE_LINE.finditer(text):
        metric = m.group(1).capitalize()
        events.append((m.start(), "score", metric, float(m.group(2))))
    events.sort()

    scores: dict[str, dict[str, float]] = {}
    clamped = False
    current: str | None = None
    for _, kind, name, value in events:
        if kind == "cand":
            current = name
            scores.setdefault(current, {})
        elif current is not None:
            assert value is not None
            if value < 0.0 or value > 100.0:
                value = min(100.0, max(0.0, value))
                clamped = True
            scores[current][name] = value

    missing = []
    for label in labels:
        got = scores.get(str(label), {})
        absent = [c for c in JUDGE_CRITERIA if c not in got]
        if absent:
            missing.append(f"{label}: {', '.join(absent) if absent else 'all'}")
    if missing:
        raise VerdictParseError(f"incomplete verdict; missing {missing}")
    return {str(label): scores[str(label)] for label in labels}, clamped


@dataclass
class JudgeVerdict:
    sample_id: str
    scores: dict[str, dict[str, float]]  # model -> metric -> value in [0, 100]
    raw_response: str
    parse_status: str  # "ok" | "unparsed"
    retries: int = 0
    clamped: bool = False


@dataclass
class CaptionSet:
    """One model's captions, keyed by sample id, with optional images."""

    model: str
    items: Mapping[str, str]
    images: Mapping[str, str] = field(default_factory=dict)


def _judge_once(
    client: ChatClient, prompt_text: str, image: str | None, labels: Sequence[str]
) -> tuple[dict | None, str, int, bool]:
    """Call the judge, re-prompting once on a malformed reply."""
    messages = [user_message(prompt_text, image, client.profile.image_mode)]
    result = client.complete(messages)
    retries = 0
    try:
        scores, clamped = parse_verdict_block(result.text, labels)
        return scores, result.text, retries, clamped
    except VerdictParseError:
        retries = 1
        followup = messages + [
            {"role": "assistant", "content": result.text},
            {"role": "user", "content": FORMAT_REMINDER},
        ]
        result2 = client.complete(followup)
        try:
            scores, clamped = parse_verdict_block(result2.text, labels)
            return scores, result2.text, retries, clamped
        except VerdictParseError:
            return None, result2.text, retries, False


def _verdict_from_labels(
    sample_id: str,
    label_to_model: Mapping[str, str],
    parsed: dict | None,
    raw: str,
    retries: int,
    clamped: bool,
) -> JudgeVerdict:
    if parsed is None:
        return JudgeVerdict(sample_id, {}, raw, "unparsed", retries, False)
    by_model = {model: parsed[label] for label, model in label_to_model.items()}
    return JudgeVerdict(sample_id, by_model, raw, "ok", retries, clamped)


def run_pairwise(
    ours: CaptionSet,
    baseline: CaptionSet,
    client: ChatClient,
    registry: TemplateRegistry,
    seed: int = 0,
) -> tuple[list[JudgeVerdict], list[str]]:
    """One-to-one comparisons: each aligned sample is scored for both
    candidates on all five metrics. Returns (verdicts, audit notes)."""
    common = sorted(set(ours.items) & set(baseline.items))
    audit = [
        f"sample {sid}: missing from one side, skipped"
        for sid in sorted(set(ours.items) ^ set(baseline.items))
    ]

    def score_one(sid: str) -> JudgeVerdict:
        prompt = render_judge_prompt(
            registry, "pairwise", [ours.items[sid], baseline.items[sid]],
            seed=stable_u64(seed, sid),
        )
        image = ours.images.get(sid) or baseline.images.get(sid)
        parsed, raw, retries, clamped = _judge_once(client, prompt.text, image, ["A", "B"])
        return _verdict_from_labels(
            sid, {"A": ours.model, "B": baseline.model}, parsed, raw, retries, clamped
        )

    verdicts = []
    for sid, outcome in run_batch(common, score_one, client.profile.concurrency):
        if isinstance(outcome, EndpointError):
            audit.append(f"sample {sid}: endpoint failure: {outcome}")
        elif isinstance(outcome, Exception):
            raise outcome
        else:
            verdicts.append(outcome)
    return verdicts, audit


def run_panel(
    candidates: Sequence[CaptionSet],
    client: ChatClient,
    registry: TemplateRegistry,
    seed: int = 0,
) -> tuple[list[JudgeVerdict], list[str]]:
    """Joint scoring of every candidate's caption per sample; presentation
    order is shuffled per sample and inverted before storage."""
    if len(candidates) < 2:
        raise ValueError("panel needs at least 2 candidate models")
    by_model = {c.model: c for c in candidates}
    if len(by_model) != len(candidates):
        raise ValueError("candidate model names must be unique")

    id_sets = [set(c.items) for c in candidates]
    common = sorted(set.intersection(*id_sets))
    audit = [
        f"sample {sid}: absent for at least one model, skipped"
        for sid in sorted(set.union(*id_sets) - set(common))
    ]

    def score_one(sid: str) -> JudgeVerdict:
        captions = {m: by_model[m].items[sid] for m in by_model}
        prompt = render_judge_prompt(registry, "panel", captions, seed=stable_u64(seed, sid))
        image = next((c.images[sid] for c in candidates if sid in c.images), None)
        labels = [str(i + 1) for i in range(len(prompt.order))]
        parsed, raw, retries, clamped = _judge_once(client, prompt.text, image, labels)
        label_to_model = {str(i + 1): model for i, model in enumerate(prompt.order)}
        return _verdict_from_labels(sid, label_to_model, parsed, raw, retries, clamped)

    verdicts = []
    for sid, outcome in run_batch(common, score_one, client.profile.concurrency):
        if isinstance(outcome, EndpointError):
            audit.append(f"sample {sid}: endpoint failure: {outcome}")
        elif isinstance(outcome, Exception):
            raise outcome
        else:
            verdicts.append(outcome)
    return verdicts, audit


@dataclass
class AggregateReport:
    model: str
    metric_means: dict[str, float]
    win_pct: float
    rank: int
    sample_count: int
    unparsed_count: int
    judge_is_candidate: bool = False


def aggregate(
    verdicts: Sequence[JudgeVerdict], judge_model: str | None = None
) -> list[AggregateReport]:
    """Per-model means, Win%, and Rank over the parsed verdicts.

    A sample's win goes to the model(s) with the strictly highest mean of
    the five metrics; t-way ties contribute 1/t each, so Win% always sums
    to 100. Rank orders by Win% descending, ties broken by the mean of the
    metric means.
    """
    parsed = sorted(
        (v for v in verdicts if v.parse_status == "ok"), key=lambda v: v.sample_id
    )
    unparsed = len(verdicts) - len(parsed)
    if not parsed:
        raise EmptyReportError("no parsed verdicts to aggregate")

    models = sorted({m for v in parsed for m in v.scores})
    sums = {m: {c: [] for c in JUDGE_CRITERIA} for m in models}
    wins = {m: 0.0 for m in models}
    counts = {m: 0 for m in models}

    for v in parsed:
        composites = {}
        for m, metrics in v.scores.items():
            counts[m] += 1
            for c in JUDGE_CRITERIA:
                sums[m][c].append(metrics[c])
            composites[m] = math.fsum(metrics[c] for c in JUDGE_CRITERIA) / len(JUDGE_CRITERIA)
        top = max(composites.values())
        winners = [m for m, score in composites.items() if score == top]
        for m in winners:
            wins[m] += 1.0 / len(winners)

    reports = []
    for m in models:
        means = {c: math.fsum(sums[m][c]) / counts[m] for c in JUDGE_CRITERIA}
        reports.append(
            AggregateReport(
                model=m,
                metric_means=means,
                win_pct=100.0 * wins[m] / len(parsed),
                rank=0,
                sample_count=counts[m],
                unparsed_count=unparsed,
                judge_is_candidate=(judge_model == m),
            )
        )

    def sort_key(r: AggregateReport):
        mean_of_means = math.fsum(r.metric_means.values()) / len(r.metric_means)
        return (-r.win_pct, -mean_of_means, r.model)

    reports.sort(key=sort_key)
    for i, r in enumerate(reports):
        r.rank = i + 1
    return reports


# ---------------------------------------------------------------------------
# annotation generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnnotationRequest:
    region_id: str
    prompt: str
    image: str


@dataclass
class AnnotationRun:
    descriptions: dict[str, str]
    failures: dict[str, str]
    attempts: dict[str, int]


def annotate_regions(
    requests: Sequence[AnnotationRequest], client: ChatClient
) -> AnnotationRun:
    """Generate a description for every region; individual failures are
    recorded and the run continues. Auth failures abort immediately."""

    def call(req: AnnotationRequest):
        messages = [user_message(req.prompt, req.image, client.profile.image_mode)]
        return client.complete(messages)

    run = AnnotationRun(descriptions={}, failures={}, attempts={})
    for req, outcome in run_batch(requests, call, client.profile.concurrency):
        if isinstance(outcome, EndpointError):
            run.failures[req.region_id] = str(outcome)
        elif isinstance(outcome, Exception):
            raise outcome
        else:
            run.descriptions[req.region_id] = outcome.text
            run.attempts[req.region_id] = outcome.attempts
    return run


# ---------------------------------------------------------------------------
# report emission (machine-readable lines + human-readable table)
# ---------------------------------------------------------------------------


def write_judge_report(reports: Sequence[AggregateReport], path_prefix: str | Path) -> None:
    prefix = Path(path_prefix)
    rows = [
        {
            "model": r.model,
            **{c: round(r.metric_means[c], 4) for c in JUDGE_CRITERIA},
            "win_pct": round(r.win_pct, 4),
            "rank": r.rank,
            "sample_count": r.sample_count,
            "unparsed_count": r.unparsed_count,
            "judge_is_candidate": r.judge_is_candidate,
        }
        for r in reports
    ]
    write_records(prefix.with_suffix(".jsonl"), rows)

    widths = max(12, max((len(r.model) for r in reports), default=12))
    header = f"{'Model':<{widths}} " + " ".join(f"{c:>7}" for c in JUDGE_CRITERIA)
    header += f" {'Win%':>7} {'Rank':>4}"
    lines = [header, "-" * len(header)]
    for r in reports:
        line = f"{r.model:<{widths}} " + " ".join(
            f"{r.metric_means[c]:7.2f}" for c in JUDGE_CRITERIA
        )
        line += f" {r.win_pct:7.2f} {r.rank:>4}"
        if r.judge_is_candidate:
            line += "  (judge vendor: self-preference diagnostic)"
        lines.append(line)
    unparsed = reports[0].unparsed_count if reports else 0
    lines.append(f"samples unparsed: {unparsed}")
    prefix.with_suffix(".txt").write_text("\n".join(lines) + "\n")
