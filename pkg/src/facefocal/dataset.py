"""Stagewise record-set assembly and the train/test split.

Record sets per stage:
  1 - plain image, global query, simple-label target, no regions
  2 - box-overlay variant, region query, caption target, one region
  3 - grayscale-masked variant, same query and caption as stage 2
  4 - one multi-box image, all regions with their descriptions as history,
      simple-label target
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import BuildIntegrityError, IncompleteInputError, ShortfallError
from .geometry import LandmarkSet, Region
from .imaging import ImageRef, MaskSpec, render_multi_overlay, render_variant, variant_path
from .prompting import TemplateRegistry, render_stage_query, stable_u64
from .taxonomy import TASKS, render_label

SOURCES = ("BP4D", "AffWild2", "RAFDB", "UTKFace", "custom")

TRUNCATION_MARK = "…"


@dataclass(frozen=True)
class SourceSample:
    """One input image with its landmarks and ground-truth labels."""

    image: ImageRef
    landmarks: LandmarkSet
    source: str
    labels: Mapping[str, object]  # task -> AuSet | emotion name | age bin

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}")
        if not self.labels:
            raise ValueError(f"{self.image_id}: at least one task must be labeled")
        for task in self.labels:
            if task not in TASKS:
                raise ValueError(f"{self.image_id}: unknown task {task!r}")

    @property
    def image_id(self) -> str:
        return self.landmarks.image_id

    def tasks(self) -> list[str]:
        return sorted(self.labels)


@dataclass
class StageRecord:
    record_id: str
    stage: int
    image_variant: str
    task: str
    query: str
    target: str
    regions: list[tuple[float, float, float, float]] = field(default_factory=list)
    history: list[tuple[tuple[float, float, float, float], str]] = field(default_factory=list)

    def __post_init__(self):
        if self.stage == 1 and self.regions:
            raise ValueError(f"{self.record_id}: stage 1 records carry no region")
        if self.stage in (2, 3) and len(self.regions) != 1:
            raise ValueError(f"{self.record_id}: stage {self.stage} needs exactly one region")
        if self.stage == 4:
            if not self.regions:
                raise ValueError(f"{self.record_id}: stage 4 needs at least one region")
            if len(self.history) != len(self.regions):
                raise ValueError(f"{self.record_id}: history length must match regions")

    def to_row(self) -> dict:
        return {
            "record_id": self.record_id,
            "stage": self.stage,
            "image_variant": self.image_variant,
            "task": self.task,
            "query": self.query,
            "target": self.target,
            "regions": [list(r) for r in self.regions],
            "history": [[list(r), d] for r, d in self.history],
        }


@dataclass
class BuildConfig:
    output_root: Path
    seed: int
    regions: Mapping[str, Sequence[Region]]  # image_id -> sampled boxes
    annotations: Mapping[str, str]  # annotation_key -> description
    registry: TemplateRegistry
    history_char_cap: int = 600
    config_hash: str = ""


def annotation_key(image_id: str, region_index: int, task: str) -> str:
    return f"{image_id}__r{region_index}__{task}"


def region_task(sample: SourceSample, region_index: int, seed: int) -> str:
    """Deterministic task choice for one (image, region) record."""
    tasks = sample.tasks()
    return tasks[stable_u64(seed, "task", sample.image_id, region_index) % len(tasks)]


def _truncate(text: str, cap: int) -> str:
    if cap and len(text) > cap:
        return text[: cap - 1] + TRUNCATION_MARK
    return text


def _history_block(entries: list[tuple[Region, str]]) -> str:
    lines = []
    for i, (region, desc) in enumerate(entries, 1):
        coords = f"[{int(region.x1)}, {int(region.y1)}, {int(region.x2)}, {int(region.y2)}]"
        lines.append(f"Region {i} {coords}: {desc}")
    return "\n".join(lines)


def build_stage(
    samples: Sequence[SourceSample], stage: int, cfg: BuildConfig
) -> tuple[list[StageRecord], dict]:
    """Build all records of one stage; renders the image variants it needs.

    Raises IncompleteInputError listing every missing annotation, and
    BuildIntegrityError when the produced count disagrees with the
    expectation derived from the inputs.
    """
    if stage not in (1, 2, 3, 4):
        raise ValueError(f"stage must be 1..4, got {stage}")

    variants_dir = cfg.output_root / "variants"
    records: list[StageRecord] = []
    missing: list[str] = []

    if stage == 1:
        expected = sum(len(s.tasks()) for s in samples)
        for sample in samples:
            for task in sample.tasks():
                query = render_stage_query(
                    cfg.registry, sample.image_id, 0, task, "stage1", cfg.seed
                )
                records.append(
                    StageRecord(
                        record_id=f"{sample.image_id}__s1__{task}",
                        stage=1,
                        image_variant=str(sample.image.path),
                        task=task,
                        query=query.text,
                        target=render_label(sample.labels[task], task),
                    )
                )

    elif stage in (2, 3):
        mode = "overlay" if stage == 2 else "grayscale_mask"
        expected = sum(len(cfg.regions.get(s.image_id, ())) for s in samples)
        for sample in samples:
            for k, region in enumerate(cfg.regions.get(sample.image_id, ())):
                task = region_task(sample, k, cfg.seed)
                key = annotation_key(sample.image_id, k, task)
                target = cfg.annotations.get(key)
                if target is None:
                    missing.append(key)
                    continue
                out = variant_path(variants_dir, sample.image_id, k, mode)
                if not out.exists():
                    render_variant(sample.image, MaskSpec(region=region, mode=mode), out)
                query = render_stage_query(
                    cfg.registry, sample.image_id, k, task, "stage23", cfg.seed,
                    region=region,
                )
                records.append(
                    StageRecord(
                        record_id=f"{sample.image_id}__s{stage}__r{k}__{task}",
                        stage=stage,
                        image_variant=str(out),
                        task=task,
                        query=query.text,
                        target=target,
                        regions=[region.as_tuple()],
                    )
                )

    else:  # stage 4
        expected = sum(len(s.tasks()) for s in samples if cfg.regions.get(s.image_id))
        for sample in samples:
            regions = list(cfg.regions.get(sample.image_id, ()))
            if not regions:
                continue
            history: list[tuple[Region, str]] = []
            for k, region in enumerate(regions):
                task = region_task(sample, k, cfg.seed)
                key = annotation_key(sample.image_id, k, task)
                desc = cfg.annotations.get(key)
                if desc is None:
                    missing.append(key)
                    continue
                history.append((region, _truncate(desc, cfg.history_char_cap)))
            if len(history) != len(regions):
                continue
            out = variants_dir / f"{sample.image_id}__multi__overlay.png"
            if not out.exists():
                render_multi_overlay(sample.image, regions, out)
            for task in sample.tasks():
                query = render_stage_query(
                    cfg.registry, sample.image_id, 0, task, "stage4", cfg.seed,
                    history=_history_block(history),
                )
                records.append(
                    StageRecord(
                        record_id=f"{sample.image_id}__s4__{task}",
                        stage=4,
                        image_variant=str(out),
                        task=task,
                        query=query.text,
                        target=render_label(sample.labels[task], task),
                        regions=[r.as_tuple() for r in regions],
                        history=[(r.as_tuple(), d) for r, d in history],
                    )
                )

    if missing:
        raise IncompleteInputError(
            f"stage {stage}: {len(missing)} region(s) lack a usable annotation",
            offenders=sorted(missing),
        )
    if len(records) != expected:
        raise BuildIntegrityError(
            f"stage {stage}: built {len(records)} records, expected {expected}"
        )

    manifest = {
        "stages": {str(stage): len(records)},
        "per_source": _source_counts(samples),
        "seed": cfg.seed,
        "config_hash": cfg.config_hash,
    }
    return records, manifest


def _source_counts(samples: Iterable[SourceSample]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for s in samples:
        counts[s.source] = counts.get(s.source, 0) + 1
    return counts


def merge_manifests(parts: Sequence[dict]) -> dict:
    merged = dict(parts[0])
    merged["stages"] = {}
    for p in parts:
        merged["stages"].update(p["stages"])
    return merged


def split_test(
    pool: Sequence[SourceSample], spec: Mapping[str, int], seed: int
) -> tuple[list[SourceSample], list[SourceSample]]:
    """Deterministic disjoint train/test split with exact per-source counts."""
    by_source: dict[str, list[SourceSample]] = {}
    for s in pool:
        by_source.setdefault(s.source, []).append(s)

    deficits = {
        src: want - len(by_source.get(src, ()))
        for src, want in spec.items()
        if want > len(by_source.get(src, ()))
    }
    if deficits:
        raise ShortfallError(
            f"pool cannot satisfy the test spec; short by {deficits}", deficits=deficits
        )

    rng = np.random.default_rng(seed)
    test: list[SourceSample] = []
    test_ids: set[str] = set()
    for src in sorted(spec):
        want = spec[src]
        if want <= 0:
            continue
        group = sorted(by_source[src], key=lambda s: s.image_id)
        order = rng.permutation(len(group))
        chosen = [group[i] for i in order[:want]]
        test.extend(chosen)
        test_ids.update(s.image_id for s in chosen)

    train = [s for s in pool if s.image_id not in test_ids]
    test.sort(key=lambda s: s.image_id)
    return train, test


# ---------------------------------------------------------------------------
# corpus loading (images + landmarks + labels on disk)
# ---------------------------------------------------------------------------


def load_landmark_file(path: str | Path, image_id: str) -> LandmarkSet:
    """One file per image: a JSON list of 68 [x, y] pairs."""
    with open(path) as fh:
        pairs = json.load(fh)
    return LandmarkSet.from_pairs(pairs, image_id)


def load_labels_file(path: str | Path) -> dict[str, dict]:
    """Label rows keyed by image id: {id, source, age?, emotion?, aus?}."""
    rows: dict[str, dict] = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            rows[row["id"]] = row
    return rows


def load_corpus(
    images_dir: str | Path, landmarks_dir: str | Path, labels_path: str | Path
) -> list[SourceSample]:
    """Assemble SourceSamples for every labeled image with landmarks."""
    images_dir, landmarks_dir = Path(images_dir), Path(landmarks_dir)
    label_rows = load_labels_file(labels_path)
    samples = []
    for image_id in sorted(label_rows):
        row = label_rows[image_id]
        image_path = None
        for ext in (".png", ".jpg", ".jpeg"):
            cand = images_dir / f"{image_id}{ext}"
            if cand.exists():
                image_path = cand
                break
        lm_path = landmarks_dir / f"{image_id}.json"
        if image_path is None or not lm_path.exists():
            continue
        labels: dict[str, object] = {}
        if row.get("age") is not None:
            from .taxonomy import bin_age

            labels["AGE"] = bin_age(int(row["age"]))
        if row.get("emotion"):
            labels["EMO"] = row["emotion"]
        if row.get("aus") is not None:
            labels["AU"] = frozenset(int(a) for a in row["aus"])
        samples.append(
            SourceSample(
                image=ImageRef.open(image_path),
                landmarks=load_landmark_file(lm_path, image_id),
                source=row.get("source", "custom"),
                labels=labels,
            )
        )
    return samples
