import numpy as np
import pytest
from PIL import Image

from facefocal.errors import ImageDecodeError, OutOfBoundsError
from facefocal.geometry import Region
from facefocal.imaging import (
    ImageRef,
    MaskSpec,
    apply_mask,
    load_pixels,
    luma_gray,
    render_multi_overlay,
    render_variant,
    variant_path,
)

from conftest import write_noise_image


def luma_oracle(r, g, b):
    """Rec. 601, rounded half-up - independent exact-rational computation."""
    from fractions import Fraction

    y = Fraction(299, 1000) * r + Fraction(587, 1000) * g + Fraction(114, 1000) * b
    return int(y + Fraction(1, 2))  # int() truncates; y + 1/2 is non-negative


@pytest.fixture
def noise(tmp_path):
    path = write_noise_image(tmp_path / "src.png", 60, 40, seed=5)
    return ImageRef.open(path)


def test_image_ref_open_and_decode_error(tmp_path, noise):
    assert (noise.width, noise.height, noise.format) == (60, 40, "PNG")
    bad = tmp_path / "bad.png"
    bad.write_text("not an image")
    with pytest.raises(ImageDecodeError):
        ImageRef.open(bad)


def test_grayscale_mask_interior_exterior(noise):
    src = load_pixels(noise)
    region = Region(10, 5, 30, 25)
    out = apply_mask(src, MaskSpec(region=region, mode="grayscale_mask"))
    # interior byte-identical
    assert np.array_equal(out[5:25, 10:30], src[5:25, 10:30])
    # exterior equals the luma oracle, replicated across channels
    for yy, xx in [(0, 0), (39, 59), (4, 10), (5, 9), (25, 30)]:
        r, g, b = (int(v) for v in src[yy, xx])
        expect = luma_oracle(r, g, b)
        assert tuple(out[yy, xx]) == (expect, expect, expect)


def test_luma_worked_example():
    pixel = np.array([[[200, 100, 50]]], dtype=np.uint8)
    assert tuple(luma_gray(pixel)[0, 0]) == (124, 124, 124)


def test_grayscale_mask_idempotent_exterior(noise):
    src = load_pixels(noise)
    spec = MaskSpec(region=Region(10, 5, 30, 25), mode="grayscale_mask")
    once = apply_mask(src, spec)
    twice = apply_mask(once, spec)
    assert np.array_equal(once, twice)


def test_mask_never_leaks_into_roi(noise):
    src = load_pixels(noise)
    region = Region(12, 8, 31, 27)
    masked = apply_mask(src, MaskSpec(region=region, mode="grayscale_mask"))
    crop_masked = apply_mask(masked, MaskSpec(region=region, mode="crop"))
    crop_src = apply_mask(src, MaskSpec(region=region, mode="crop"))
    assert np.array_equal(crop_masked, crop_src)


def test_crop_identity(noise):
    src = load_pixels(noise)
    out = apply_mask(src, MaskSpec(region=Region(0, 0, 60, 40), mode="crop"))
    assert np.array_equal(out, src)


def test_crop_dimensions(noise):
    out = apply_mask(load_pixels(noise), MaskSpec(region=Region(3, 7, 13, 27), mode="crop"))
    assert out.shape == (20, 10, 3)


def test_overlay_outside_frame_unchanged(noise):
    src = load_pixels(noise)
    region = Region(10, 10, 30, 30)
    out = apply_mask(src, MaskSpec(region=region, mode="overlay", overlay_thickness=2))
    assert out.shape == src.shape
    # strictly inside the 2px frame: untouched
    assert np.array_equal(out[12:28, 12:28], src[12:28, 12:28])
    # outside the region: untouched
    assert np.array_equal(out[:10], src[:10])
    assert np.array_equal(out[30:], src[30:])
    # the frame itself took the overlay color
    assert tuple(out[10, 10]) == (255, 0, 0)
    assert tuple(out[29, 29]) == (255, 0, 0)


def test_partial_region_clipped_not_rejected(noise):
    src = load_pixels(noise)
    out = apply_mask(src, MaskSpec(region=Region(-10, -10, 20, 20), mode="crop"))
    assert out.shape == (20, 20, 3)
    assert np.array_equal(out, src[0:20, 0:20])


def test_fully_outside_region_raises(noise):
    src = load_pixels(noise)
    with pytest.raises(OutOfBoundsError):
        apply_mask(src, MaskSpec(region=Region(100, 100, 120, 120), mode="crop"))


def test_render_variant_writes_png(tmp_path, noise):
    out_path = variant_path(tmp_path, "imgX", 3, "grayscale_mask")
    ref = render_variant(noise, MaskSpec(region=Region(5, 5, 25, 25), mode="grayscale_mask"), out_path)
    assert out_path.name == "imgX__r3__grayscale_mask.png"
    assert ref.format == "PNG" and out_path.exists()
    with Image.open(out_path) as im:
        assert im.format == "PNG"


def test_render_multi_overlay(tmp_path, noise):
    regions = [Region(2, 2, 20, 20), Region(30, 10, 55, 35)]
    ref = render_multi_overlay(noise, regions, tmp_path / "multi.png")
    out = load_pixels(ref)
    assert tuple(out[2, 2]) == (255, 0, 0)
    assert tuple(out[10, 30]) == (255, 0, 0)
