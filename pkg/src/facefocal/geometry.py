"""Face-region geometry: landmark bounding box, seeded ROI sampling, IoU.

All coordinates are pixels. Sampled boxes are integer-valued; IoU is
computed on the real-valued box extents.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, DegenerateRegionError, SamplingExhaustedError

LANDMARK_COUNT = 68


@dataclass(frozen=True)
class Region:
    """Axis-aligned box (x1, y1, x2, y2) with x1 < x2 and y1 < y2."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(f"region must have positive extent, got {self.as_tuple()}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height


@dataclass(frozen=True)
class LandmarkSet:
    """68 named 2-D facial points for one image."""

    points: tuple[tuple[float, float], ...]
    image_id: str

    def __post_init__(self):
        if len(self.points) != LANDMARK_COUNT:
            raise ValueError(f"expected {LANDMARK_COUNT} landmarks, got {len(self.points)}")
        for x, y in self.points:
            if not (math.isfinite(x) and math.isfinite(y)):
                raise ValueError(f"non-finite landmark in {self.image_id}")
            if x < 0 or y < 0:
                raise ValueError(f"negative landmark coordinate in {self.image_id}")

    @classmethod
    def from_pairs(cls, pairs: Sequence[Sequence[float]], image_id: str) -> "LandmarkSet":
        return cls(tuple((float(x), float(y)) for x, y in pairs), image_id)


@dataclass(frozen=True)
class RoiSamplerConfig:
    """Knobs for the rejection-sampling loop.

    Box widths are drawn from [min_ratio*W_f, max_ratio*W_f] and heights
    from the same ratios of H_f; pairs of accepted boxes must stay below
    iou_thresh.
    """

    n_boxes: int = 12
    iou_thresh: float = 0.3
    max_attempts: int = 2000
    min_ratio: float = 0.2
    max_ratio: float = 0.4
    seed: int = 0
    # optional post-filter: candidate must cover >= this fraction of some
    # key facial area (see key_area_overlap); None disables the filter
    key_area_min: float | None = None
    key_areas: Mapping[str, Sequence[int]] | None = field(default=None, hash=False)

    def __post_init__(self):
        if not (0.0 < self.min_ratio < self.max_ratio <= 1.0):
            raise ValueError("need 0 < min_ratio < max_ratio <= 1")
        if self.n_boxes < 1:
            raise ValueError("n_boxes must be >= 1")
        if self.max_attempts < self.n_boxes:
            raise ValueError("max_attempts must be >= n_boxes")
        if not (0.0 <= self.iou_thresh <= 1.0):
            raise ValueError("iou_thresh must lie in [0, 1]")


def face_bbox(landmarks: LandmarkSet) -> Region:
    """Tightest box around all 68 points: (min x, min y, max x, max y)."""
    xs = [p[0] for p in landmarks.points]
    ys = [p[1] for p in landmarks.points]
    x1, x2 = min(xs), max(xs)
    y1, y2 = min(ys), max(ys)
    if x1 == x2 or y1 == y2:
        raise DegenerateRegionError(
            f"landmarks of {landmarks.image_id} span a zero-area region"
        )
    return Region(x1, y1, x2, y2)


def iou(a: Region, b: Region) -> float:
    """Intersection over union of two boxes; always in [0, 1]."""
    ov_w = max(0.0, min(a.x2, b.x2) - max(a.x1, b.x1))
    ov_h = max(0.0, min(a.y2, b.y2) - max(a.y1, b.y1))
    overlap = ov_w * ov_h
    if overlap == 0.0:
        return 0.0
    return overlap / (a.area + b.area - overlap)


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def _int_side_bounds(lo: float, hi: float, what: str) -> tuple[int, int]:
    lo_i, hi_i = math.ceil(lo), math.floor(hi)
    if hi_i < 1 or hi_i < lo_i:
        raise DegenerateRegionError(
            f"face too small: no integer {what} exists in [{lo:.2f}, {hi:.2f}]"
        )
    return max(lo_i, 1), hi_i


def sample_regions(landmarks: LandmarkSet, cfg: RoiSamplerConfig) -> list[Region]:
    """Draw cfg.n_boxes mutually low-overlap boxes inside the face region.

    Every attempt resamples a fresh width/height (uniform over the ratio
    bounds, rounded to integer pixels) and a top-left corner uniform over
    the admissible range; a candidate is kept only if its IoU with every
    accepted box stays below cfg.iou_thresh. Identical (landmarks, cfg)
    give identical output.

    Raises SamplingExhaustedError once cfg.max_attempts proposals have
    been spent without filling the set.
    """
    face = face_bbox(landmarks)
    w_lo, w_hi = cfg.min_ratio * face.width, cfg.max_ratio * face.width
    h_lo, h_hi = cfg.min_ratio * face.height, cfg.max_ratio * face.height
    w_min, w_max = _int_side_bounds(w_lo, w_hi, "width")
    h_min, h_max = _int_side_bounds(h_lo, h_hi, "height")

    if cfg.key_area_min is not None and not cfg.key_areas:
        raise ConfigurationError("key_area_min set but no key-area templates given")

    rng = np.random.default_rng(cfg.seed)
    accepted: list[Region] = []
    attempts = 0
    while len(accepted) < cfg.n_boxes:
        if attempts >= cfg.max_attempts:
            raise SamplingExhaustedError(
                f"{cfg.max_attempts} attempts produced only {len(accepted)} of "
                f"{cfg.n_boxes} boxes for {landmarks.image_id}",
                accepted=len(accepted),
                requested=cfg.n_boxes,
            )
        attempts += 1

        w = min(max(_round_half_up(rng.uniform(w_lo, w_hi)), w_min), w_max)
        h = min(max(_round_half_up(rng.uniform(h_lo, h_hi)), h_min), h_max)
        x_lo, x_hi = math.ceil(face.x1), math.floor(face.x2 - w)
        y_lo, y_hi = math.ceil(face.y1), math.floor(face.y2 - h)
        if x_hi < x_lo or y_hi < y_lo:
            continue  # fractional face bounds left no integer corner for this size
        x1 = min(max(_round_half_up(rng.uniform(face.x1, face.x2 - w)), x_lo), x_hi)
        y1 = min(max(_round_half_up(rng.uniform(face.y1, face.y2 - h)), y_lo), y_hi)
        cand = Region(float(x1), float(y1), float(x1 + w), float(y1 + h))

        if cfg.key_area_min is not None:
            if key_area_overlap(cand, landmarks, cfg.key_areas) < cfg.key_area_min:
                continue
        if all(iou(cand, kept) < cfg.iou_thresh for kept in accepted):
            accepted.append(cand)
    return accepted


# ---------------------------------------------------------------------------
# polygon helpers (key facial areas, AU activation areas)
# ---------------------------------------------------------------------------


def polygon_area(vertices: Sequence[tuple[float, float]]) -> float:
    """Shoelace area of a simple polygon."""
    if len(vertices) < 3:
        return 0.0
    acc = 0.0
    for i in range(len(vertices)):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % len(vertices)]
        acc += x1 * y2 - x2 * y1
    return abs(acc) * 0.5


def clip_polygon_to_region(
    vertices: Sequence[tuple[float, float]], region: Region
) -> list[tuple[float, float]]:
    """Sutherland-Hodgman clip of a simple polygon against an axis-aligned box."""
    def inside(p: tuple[float, float], edge: str) -> bool:
        x, y = p
        if edge == "l":
            return x >= region.x1
        if edge == "r":
            return x <= region.x2
        if edge == "t":
            return y >= region.y1
        return y <= region.y2

    def intersect(p: tuple[float, float], q: tuple[float, float], edge: str) -> tuple[float, float]:
        (x1, y1), (x2, y2) = p, q
        dx, dy = x2 - x1, y2 - y1
        if edge in ("l", "r"):
            xe = region.x1 if edge == "l" else region.x2
            t = (xe - x1) / (dx if dx != 0 else 1e-12)
            return (xe, y1 + t * dy)
        ye = region.y1 if edge == "t" else region.y2
        t = (ye - y1) / (dy if dy != 0 else 1e-12)
        return (x1 + t * dx, ye)

    poly = list(vertices)
    for edge in ("l", "r", "t", "b"):
        if not poly:
            break
        out: list[tuple[float, float]] = []
        prev = poly[-1]
        for cur in poly:
            if inside(cur, edge):
                if not inside(prev, edge):
                    out.append(intersect(prev, cur, edge))
                out.append(cur)
            elif inside(prev, edge):
                out.append(intersect(prev, cur, edge))
            prev = cur
        poly = out
    return poly


def polygon_region_fraction(
    indices: Sequence[int], landmarks: LandmarkSet, region: Region
) -> float:
    """Fraction of the landmark-index polygon's area that falls inside region."""
    vertices = [landmarks.points[i] for i in indices]
    total = polygon_area(vertices)
    if total == 0.0:
        return 0.0
    clipped = clip_polygon_to_region(vertices, region)
    return min(1.0, polygon_area(clipped) / total)


def key_area_overlap(
    region: Region,
    landmarks: LandmarkSet,
    areas: Mapping[str, Sequence[int]],
) -> float:
    """Best coverage of any named key facial area by the region.

    Each area maps a name (brows, eyes, nose, mouth) to landmark indices
    forming a polygon; returns max over areas of the covered area fraction.
    """
    if not areas:
        raise ConfigurationError("key-area template set is empty")
    return max(polygon_region_fraction(idx, landmarks, region) for idx in areas.values())
