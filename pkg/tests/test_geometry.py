import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from facefocal.errors import (
    ConfigurationError,
    DegenerateRegionError,
    SamplingExhaustedError,
)
from facefocal.geometry import (
    LandmarkSet,
    Region,
    RoiSamplerConfig,
    face_bbox,
    iou,
    key_area_overlap,
    polygon_region_fraction,
    sample_regions,
)

from conftest import landmarks_at, make_landmarks


# --- independent oracles -----------------------------------------------


def bbox_scan_oracle(points):
    xs = sorted(p[0] for p in points)
    ys = sorted(p[1] for p in points)
    return (xs[0], ys[0], xs[-1], ys[-1])


def iou_raster_oracle(a: Region, b: Region) -> float:
    """Integer-grid rasterization: count unit cells covered by each box."""
    x_lo = int(min(a.x1, b.x1))
    x_hi = int(max(a.x2, b.x2))
    y_lo = int(min(a.y1, b.y1))
    y_hi = int(max(a.y2, b.y2))
    inter = union = 0
    for x in range(x_lo, x_hi):
        for y in range(y_lo, y_hi):
            in_a = a.x1 <= x < a.x2 and a.y1 <= y < a.y2
            in_b = b.x1 <= x < b.x2 and b.y1 <= y < b.y2
            inter += in_a and in_b
            union += in_a or in_b
    return inter / union if union else 0.0


def mc_polygon_fraction(vertices, region: Region, n=1_000_000, seed=9):
    """Monte-Carlo polygon-box intersection fraction (test oracle only)."""
    rng = np.random.default_rng(seed)
    xs = np.array([v[0] for v in vertices])
    ys = np.array([v[1] for v in vertices])
    px = rng.uniform(xs.min(), xs.max(), n)
    py = rng.uniform(ys.min(), ys.max(), n)

    inside = np.zeros(n, dtype=bool)
    j = len(vertices) - 1
    for i in range(len(vertices)):
        xi, yi = vertices[i]
        xj, yj = vertices[j]
        cond = (ys_gt := (yi > py)) != (yj > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_cross = (xj - xi) * (py - yi) / (yj - yi) + xi
        inside ^= cond & (px < x_cross)
        j = i
    in_poly = inside.sum()
    if in_poly == 0:
        return 0.0
    in_box = (
        inside
        & (px >= region.x1)
        & (px <= region.x2)
        & (py >= region.y1)
        & (py <= region.y2)
    )
    return in_box.sum() / in_poly


# --- face_bbox -----------------------------------------------------------


def test_face_bbox_min_max():
    lm = landmarks_at([(1, 2), (3, 5), (2, 1)])
    box = face_bbox(lm)
    assert box.as_tuple() == (1, 1, 3, 5)
    assert box.width == 2 and box.height == 4


def test_face_bbox_degenerate():
    lm = landmarks_at([(5, 5)])
    with pytest.raises(DegenerateRegionError):
        face_bbox(lm)
    with pytest.raises(DegenerateRegionError):
        face_bbox(landmarks_at([(3, 1), (3, 9)]))  # all x equal


def test_face_bbox_matches_scan_oracle():
    lm = make_landmarks(seed=7)
    assert face_bbox(lm).as_tuple() == bbox_scan_oracle(lm.points)


def test_landmark_set_validation():
    with pytest.raises(ValueError):
        LandmarkSet.from_pairs([(1, 2)] * 67, "short")
    with pytest.raises(ValueError):
        LandmarkSet.from_pairs([(1, 2)] * 67 + [(-1, 2)], "neg")


# --- iou ------------------------------------------------------------------


def test_iou_identity_and_disjoint():
    r = Region(2, 3, 10, 12)
    assert iou(r, r) == 1.0
    assert iou(Region(0, 0, 5, 5), Region(6, 6, 9, 9)) == 0.0


def test_iou_worked_example():
    assert iou(Region(0, 0, 2, 2), Region(1, 1, 3, 3)) == 1 / 7


def test_iou_matches_raster_oracle():
    rng = np.random.default_rng(3)
    for _ in range(300):
        x1, y1 = rng.integers(0, 20, 2)
        a = Region(float(x1), float(y1), float(x1 + rng.integers(1, 15)), float(y1 + rng.integers(1, 15)))
        x1, y1 = rng.integers(0, 20, 2)
        b = Region(float(x1), float(y1), float(x1 + rng.integers(1, 15)), float(y1 + rng.integers(1, 15)))
        assert iou(a, b) == pytest.approx(iou_raster_oracle(a, b), abs=1e-9)


boxes = st.builds(
    lambda x, y, w, h: Region(float(x), float(y), float(x + w), float(y + h)),
    st.integers(0, 50),
    st.integers(0, 50),
    st.integers(1, 40),
    st.integers(1, 40),
)


@given(boxes, boxes)
@settings(max_examples=200)
def test_iou_symmetric_and_bounded(a, b):
    assert iou(a, b) == iou(b, a)
    assert 0.0 <= iou(a, b) <= 1.0
    assert iou(a, a) == 1.0


# --- sample_regions -------------------------------------------------------


def test_sampled_widths_follow_ratio_bounds():
    # face spans exactly 100x100, so defaults put every width in [20, 40]
    lm = landmarks_at([(0, 0), (100, 100)])
    boxes = sample_regions(lm, RoiSamplerConfig(n_boxes=12, seed=5))
    for b in boxes:
        assert 20 <= b.width <= 40
        assert 20 <= b.height <= 40


def test_single_box_trivial():
    lm = make_landmarks(seed=11)
    boxes = sample_regions(lm, RoiSamplerConfig(n_boxes=1, seed=1))
    assert len(boxes) == 1


def test_pairwise_iou_oracle_and_determinism():
    lm = make_landmarks(seed=21)
    cfg = RoiSamplerConfig(n_boxes=12, iou_thresh=0.3, seed=77)
    boxes = sample_regions(lm, cfg)
    assert len(boxes) == 12
    pairs = [(a, b) for i, a in enumerate(boxes) for b in boxes[i + 1 :]]
    assert len(pairs) == 66
    assert all(iou(a, b) < 0.3 for a, b in pairs)

    face = face_bbox(lm)
    for b in boxes:
        assert face.x1 <= b.x1 < b.x2 <= face.x2
        assert face.y1 <= b.y1 < b.y2 <= face.y2

    again = sample_regions(lm, cfg)
    assert [b.as_tuple() for b in again] == [b.as_tuple() for b in boxes]


def test_corner_coordinate_bounds():
    lm = make_landmarks(seed=33)
    face = face_bbox(lm)
    cfg = RoiSamplerConfig(n_boxes=12, seed=2)
    for b in sample_regions(lm, cfg):
        assert face.x1 <= b.x1 <= face.x2 - b.width
        assert face.y1 <= b.y1 <= face.y2 - b.height


def test_sampling_exhausted_carries_partial():
    lm = make_landmarks(seed=4)
    # an impossible ask: many boxes, near-zero allowed overlap, few attempts
    cfg = RoiSamplerConfig(n_boxes=40, iou_thresh=0.0001, max_attempts=45, seed=0)
    with pytest.raises(SamplingExhaustedError) as err:
        sample_regions(lm, cfg)
    assert 0 <= err.value.accepted < 40
    assert err.value.requested == 40


def test_sampler_config_validation():
    with pytest.raises(ValueError):
        RoiSamplerConfig(min_ratio=0.5, max_ratio=0.4)
    with pytest.raises(ValueError):
        RoiSamplerConfig(n_boxes=0)
    with pytest.raises(ValueError):
        RoiSamplerConfig(n_boxes=10, max_attempts=5)


def test_key_area_filter_resamples():
    lm = landmarks_at([(0, 0), (100, 100), (45, 45), (55, 45), (55, 55), (45, 55)])
    areas = {"center": [2, 3, 4, 5]}
    cfg = RoiSamplerConfig(
        n_boxes=3, seed=9, max_attempts=5000, key_area_min=0.8, key_areas=areas
    )
    for box in sample_regions(lm, cfg):
        assert key_area_overlap(box, lm, areas) >= 0.8


# --- key_area_overlap -----------------------------------------------------


def test_key_area_containment_and_disjoint():
    # mouth polygon on landmarks 0..3 forming a square at (10..20)
    lm = landmarks_at([(10, 10), (20, 10), (20, 20), (10, 20)])
    areas = {"mouth": [0, 1, 2, 3]}
    assert key_area_overlap(Region(0, 0, 30, 30), lm, areas) == 1.0
    assert key_area_overlap(Region(40, 40, 50, 50), lm, areas) == 0.0


def test_key_area_empty_templates():
    lm = make_landmarks(seed=1)
    with pytest.raises(ConfigurationError):
        key_area_overlap(Region(0, 0, 10, 10), lm, {})


def test_half_triangle_matches_monte_carlo():
    # symmetric triangle, box covering its left half exactly
    verts = [(0.0, 0.0), (4.0, 0.0), (2.0, 2.0)]
    lm = landmarks_at(verts)
    region = Region(0, 0, 2, 2)
    exact = polygon_region_fraction([0, 1, 2], lm, region)
    assert exact == pytest.approx(0.5, abs=1e-6)
    assert mc_polygon_fraction(verts, region) == pytest.approx(exact, abs=5e-3)


@given(st.integers(0, 30), st.integers(0, 30), st.integers(5, 40), st.integers(5, 40))
@settings(max_examples=50)
def test_growing_box_never_lowers_coverage(x, y, w, h):
    verts = [(10.0, 10.0), (30.0, 10.0), (30.0, 30.0), (10.0, 30.0)]
    lm = landmarks_at(verts)
    small = Region(float(x), float(y), float(x + w), float(y + h))
    big = Region(float(x), float(y), float(x + w + 10), float(y + h + 10))
    f_small = polygon_region_fraction([0, 1, 2, 3], lm, small)
    f_big = polygon_region_fraction([0, 1, 2, 3], lm, big)
    assert f_big >= f_small - 1e-12
