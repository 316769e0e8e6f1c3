"""Label spaces (AU subset, emotion, age bin), age re-binning, and the
region-level AU ground-truth rule, plus free-text label extraction.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Mapping, Sequence

import yaml

from .errors import ConfigurationError, UnparseableLabelError
from .geometry import LandmarkSet, Region, polygon_region_fraction

AGE_BINS = (
    "0-4", "5-9", "10-14", "15-19", "20-24", "25-29",
    "30-34", "35-39", "40-44", "45-49", "50-59", "60+",
)

EMOTIONS = ("Neutral", "Anger", "Disgust", "Fear", "Happiness", "Sadness", "Surprise")

AU_VOCAB = (1, 2, 4, 6, 7, 10, 12, 14, 15, 17, 23, 24)

TASKS = ("AU", "EMO", "AGE")

# an AU counts as active inside a box once this share of its canonical
# activation area lies within the box
REGION_AU_AREA_MIN = 0.6


def bin_age(age: int) -> str:
    """Map a non-negative integer age onto its bin; total over [0, inf)."""
    if age < 0:
        raise ValueError(f"age must be non-negative, got {age}")
    if age >= 60:
        return "60+"
    if age >= 50:
        return "50-59"
    return AGE_BINS[age // 5]


@dataclass(frozen=True)
class AuTemplate:
    """Canonical activation area of one AU as a landmark-index polygon."""

    au: int
    polygon: tuple[int, ...]

    def __post_init__(self):
        if self.au not in AU_VOCAB:
            raise ConfigurationError(f"AU{self.au} is outside the vocabulary")
        if len(self.polygon) < 3:
            raise ConfigurationError(f"AU{self.au} polygon needs >= 3 vertices")
        if any(i < 0 or i >= 68 for i in self.polygon):
            raise ConfigurationError(f"AU{self.au} polygon index out of range")


def load_au_templates(path=None) -> list[AuTemplate]:
    """Load AU activation-area polygons; defaults ship with the package.

    The defaults are deliberately coarse (brow AUs over brow indices, lip
    AUs over mouth indices) and meant to be overridden per deployment.
    """
    if path is None:
        text = resources.files("facefocal").joinpath("data").joinpath("au_templates.yaml").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    raw = yaml.safe_load(text)
    return [AuTemplate(au=int(k), polygon=tuple(v)) for k, v in raw.items()]


def load_key_areas(path=None) -> dict[str, tuple[int, ...]]:
    """Named key facial areas (brows, eyes, nose, mouth) as index polygons."""
    if path is None:
        text = resources.files("facefocal").joinpath("data").joinpath("key_areas.yaml").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    raw = yaml.safe_load(text)
    return {str(k): tuple(v) for k, v in raw.items()}


def region_au_truth(
    global_aus: Iterable[int],
    region: Region,
    landmarks: LandmarkSet,
    templates: Sequence[AuTemplate],
) -> frozenset[int]:
    """AUs from the global truth whose activation area is mostly in the box.

    Keeps au when area(polygon(au) & region) / area(polygon(au)) >= 0.6.
    Result is always a subset of global_aus.
    """
    by_au: Mapping[int, AuTemplate] = {t.au: t for t in templates}
    active = frozenset(global_aus)
    missing = [f"AU{au}" for au in sorted(active) if au not in by_au]
    if missing:
        raise ConfigurationError(f"no activation-area template for {', '.join(missing)}")
    kept = {
        au
        for au in active
        if polygon_region_fraction(by_au[au].polygon, landmarks, region) >= REGION_AU_AREA_MIN
    }
    return frozenset(kept)


# ---------------------------------------------------------------------------
# canonical rendering and free-text extraction
# ---------------------------------------------------------------------------

_AU_TOKEN = re.compile(r"\bAU\s?(\d{1,2})\b", re.IGNORECASE)
_AU_NONE = re.compile(r"\b(none|no action units?)\b", re.IGNORECASE)
_EMO_PATTERN = re.compile(r"\b(?:" + "|".join(EMOTIONS) + ")", re.IGNORECASE)
_DASHES = str.maketrans({"–": "-", "—": "-"})
_AGE_RANGE = re.compile(r"(?<!\d)(\d{1,2})\s*-\s*(\d{1,2})(?!\d)")
_AGE_OPEN = re.compile(r"(?<!\d)60\s*(?:\+|plus)", re.IGNORECASE)


def render_label(value, task: str) -> str:
    """Canonical text for a label: "AU6, AU12" / "Happiness" / "30-34".

    Bit-exact counterpart of parse_label; an empty AU set renders as "none".
    """
    if task == "AU":
        aus = sorted(value)
        return ", ".join(f"AU{a}" for a in aus) if aus else "none"
    if task == "EMO":
        if value not in EMOTIONS:
            raise ValueError(f"unknown emotion {value!r}")
        return value
    if task == "AGE":
        if value not in AGE_BINS:
            raise ValueError(f"unknown age bin {value!r}")
        return value
    raise ValueError(f"unknown task {task!r}")


def parse_label(text: str, task: str):
    """Extract a label of the given task from free-form model text.

    AU -> frozenset of vocabulary AUs (deduped); "none" yields the empty
    set. EMO/AGE -> the last stated class/bin (models reason first and
    conclude last). Raises UnparseableLabelError when nothing matches;
    callers score the sample as wrong and continue.
    """
    if task == "AU":
        found = {int(m.group(1)) for m in _AU_TOKEN.finditer(text)}
        kept = frozenset(a for a in found if a in AU_VOCAB)
        if kept:
            return kept
        if _AU_NONE.search(text):
            return frozenset()
        raise UnparseableLabelError(f"no AU token in: {text[:80]!r}")

    if task == "EMO":
        matches = list(_EMO_PATTERN.finditer(text))
        if not matches:
            raise UnparseableLabelError(f"no emotion in: {text[:80]!r}")
        return matches[-1].group(0).capitalize()

    if task == "AGE":
        normalized = text.translate(_DASHES)
        candidates: list[tuple[int, str]] = []
        for m in _AGE_RANGE.finditer(normalized):
            bin_name = f"{int(m.group(1))}-{int(m.group(2))}"
            if bin_name in AGE_BINS:
                candidates.append((m.start(), bin_name))
        for m in _AGE_OPEN.finditer(normalized):
            candidates.append((m.start(), "60+"))
        if not candidates:
            raise UnparseableLabelError(f"no age bin in: {text[:80]!r}")
        return max(candidates)[1]

    raise ValueError(f"unknown task {task!r}")
