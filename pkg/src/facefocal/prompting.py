"""Prompt template registry: annotation prompts, stagewise query prompts
(5 variants per task per stage), and judge prompts for both protocols.

Templates live as data files with a small front-matter header so users can
edit the wording without touching code.
"""

from __future__ import annotations

import hashlib
import string
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import yaml

from .errors import BindingError, ProtocolError, RegistryError
from .geometry import Region
from .taxonomy import TASKS

STAGES = ("annotate", "stage1", "stage23", "stage4", "judge_pairwise", "judge_panel")
QUERY_STAGES = ("stage1", "stage23", "stage4")
VARIANTS_PER_GROUP = 5

JUDGE_CRITERIA = ("Cls", "Det", "Flu", "Box", "Sem")


def stable_u64(*parts) -> int:
    """Platform-independent 64-bit hash of the joined parts."""
    key = "|".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big")


def format_region(region: Region) -> str:
    """Serialize box coordinates as "[x1, y1, x2, y2]"."""
    def fmt(v: float) -> str:
        return str(int(v)) if float(v).is_integer() else str(v)

    return f"[{fmt(region.x1)}, {fmt(region.y1)}, {fmt(region.x2)}, {fmt(region.y2)}]"


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    stage: str
    task: str  # AU | EMO | AGE | ALL
    body: str
    placeholders: tuple[str, ...]

    def render(self, **bindings) -> str:
        try:
            return self.body.format(**bindings)
        except (KeyError, IndexError) as exc:
            raise BindingError(f"template {self.id} missing binding: {exc}") from exc


def _parse_template_file(text: str, origin: str) -> PromptTemplate:
    if not text.startswith("---"):
        raise RegistryError(f"{origin}: missing front matter")
    try:
        _, head, body = text.split("---", 2)
    except ValueError as exc:
        raise RegistryError(f"{origin}: malformed front matter") from exc
    meta = yaml.safe_load(head)
    body = body.strip()
    declared = tuple(meta.get("placeholders") or ())
    used = {f for _, f, _, _ in string.Formatter().parse(body) if f}
    if used != set(declared):
        raise RegistryError(
            f"{origin}: placeholders used {sorted(used)} != declared {sorted(declared)}"
        )
    tpl = PromptTemplate(
        id=str(meta["id"]),
        stage=str(meta["stage"]),
        task=str(meta["task"]),
        body=body,
        placeholders=declared,
    )
    if tpl.stage not in STAGES:
        raise RegistryError(f"{origin}: unknown stage {tpl.stage!r}")
    if tpl.task not in TASKS + ("ALL",):
        raise RegistryError(f"{origin}: unknown task {tpl.task!r}")
    return tpl


class TemplateRegistry:
    """Immutable set of templates, validated for completeness at load."""

    def __init__(self, templates: Sequence[PromptTemplate]):
        self._by_group: dict[tuple[str, str], list[PromptTemplate]] = {}
        seen: set[str] = set()
        for tpl in templates:
            if tpl.id in seen:
                raise RegistryError(f"duplicate template id {tpl.id!r}")
            seen.add(tpl.id)
            self._by_group.setdefault((tpl.stage, tpl.task), []).append(tpl)
        for group in self._by_group.values():
            group.sort(key=lambda t: t.id)
        self._validate()

    @classmethod
    def load(cls, root: str | Path | None = None) -> "TemplateRegistry":
        if root is None:
            root = resources.files("facefocal").joinpath("data").joinpath("templates")
        else:
            root = Path(root)
        if isinstance(root, Path):
            files = sorted(root.rglob("*.txt"))
        else:
            files = sorted(_walk(root), key=str)
        templates = [_parse_template_file(path.read_text(), str(path)) for path in files]
        return cls(templates)

    def _validate(self):
        for stage in QUERY_STAGES:
            for task in TASKS:
                n = len(self._by_group.get((stage, task), ()))
                if n != VARIANTS_PER_GROUP:
                    raise RegistryError(
                        f"stage {stage!r} task {task!r} has {n} templates, "
                        f"need exactly {VARIANTS_PER_GROUP}"
                    )
        for task in TASKS:
            if not self._by_group.get(("annotate", task)):
                raise RegistryError(f"no annotation template for task {task!r}")
        for stage in ("judge_pairwise", "judge_panel"):
            if not self._by_group.get((stage, "ALL")):
                raise RegistryError(f"no template for {stage!r}")

    def group(self, stage: str, task: str) -> list[PromptTemplate]:
        try:
            return list(self._by_group[(stage, task)])
        except KeyError:
            raise RegistryError(f"no templates for stage {stage!r} task {task!r}") from None

    def assign(
        self, image_id: str, region_index: int, task: str, stage: str, seed: int
    ) -> PromptTemplate:
        """Deterministic uniform pick among the 5 variants of a group."""
        group = self.group(stage, task)
        idx = stable_u64(seed, stage, task, image_id, region_index) % len(group)
        return group[idx]


def _walk(traversable):
    # importlib.resources traversables have no rglob; flat walk is enough
    for entry in traversable.iterdir():
        if entry.is_dir():
            yield from _walk(entry)
        elif entry.name.endswith(".txt"):
            yield entry


def task_tag(task: str) -> str:
    return f"<Task: {task}>"


def render_annotation_prompt(
    registry: TemplateRegistry,
    task: str,
    region: Region,
    label: str | None = None,
) -> str:
    """Annotation prompt for one region: role framing, region constraint,
    then the structured-output instruction.

    AGE and EMO embed the ground-truth label; AU prompts carry no label
    and leave the response format unconstrained.
    """
    tpl = registry.group("annotate", task)[0]
    bindings: dict[str, str] = {"region": format_region(region)}
    if "label" in tpl.placeholders:
        if label is None:
            raise BindingError(f"{task} annotation prompt requires a ground-truth label")
        bindings["label"] = label
    return tpl.render(**bindings)


@dataclass(frozen=True)
class RenderedQuery:
    template_id: str
    text: str


def render_stage_query(
    registry: TemplateRegistry,
    image_id: str,
    region_index: int,
    task: str,
    stage: str,
    seed: int,
    *,
    region: Region | None = None,
    history: str | None = None,
) -> RenderedQuery:
    """Pick the variant for this (image, region, task, stage, seed) and
    render it, prefixed with the task tag."""
    tpl = registry.assign(image_id, region_index, task, stage, seed)
    bindings: dict[str, str] = {}
    if "region" in tpl.placeholders:
        if region is None:
            raise BindingError(f"template {tpl.id} requires a region binding")
        bindings["region"] = format_region(region)
    if "history" in tpl.placeholders:
        if history is None:
            raise BindingError(f"template {tpl.id} requires a history binding")
        bindings["history"] = history
    text = f"{task_tag(task)} {tpl.render(**bindings)}"
    return RenderedQuery(template_id=tpl.id, text=text)


@dataclass(frozen=True)
class JudgePrompt:
    text: str
    # candidate label, in presentation order, per position; the harness
    # inverts this to map scores back onto models
    order: tuple[str, ...]


def _caption_block(labeled: Sequence[tuple[str, str]]) -> str:
    parts = [f"Caption {label}:\n{text}" for label, text in labeled]
    return "\n\n".join(parts)


def render_judge_prompt(
    registry: TemplateRegistry,
    protocol: str,
    captions,
    seed: int = 0,
) -> JudgePrompt:
    """Judge prompt for one sample.

    pairwise: captions is a 2-sequence, presented as A and B in order.
    panel: captions is a mapping model -> caption; presentation order is a
    seed-determined permutation and is returned so scores can be mapped
    back to models.
    """
    if protocol == "pairwise":
        if len(captions) != 2:
            raise ProtocolError(f"pairwise needs exactly 2 captions, got {len(captions)}")
        labels = ("A", "B")
        labeled = list(zip(labels, captions))
        order = labels
    elif protocol == "panel":
        if not isinstance(captions, Mapping) or len(captions) < 2:
            raise ProtocolError("panel needs a mapping of >= 2 model captions")
        models = sorted(captions)
        perm = _permutation(len(models), seed)
        shown = [models[i] for i in perm]
        labeled = [(str(pos + 1), captions[m]) for pos, m in enumerate(shown)]
        order = tuple(shown)
    else:
        raise ProtocolError(f"unknown judge protocol {protocol!r}")

    stage = "judge_pairwise" if protocol == "pairwise" else "judge_panel"
    tpl = registry.group(stage, "ALL")[0]
    text = tpl.render(captions=_caption_block(labeled))
    return JudgePrompt(text=text, order=order)


def _permutation(n: int, seed: int) -> list[int]:
    """Fisher-Yates permutation of range(n) driven by the stable hash."""
    idx = list(range(n))
    for i in range(n - 1, 0, -1):
        j = stable_u64(seed, "perm", i) % (i + 1)
        idx[i], idx[j] = idx[j], idx[i]
    return idx
