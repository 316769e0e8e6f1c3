"""Image variants for the training stages: box overlay, grayscale mask, crop.

Pixel semantics: a region (x1, y1, x2, y2) covers columns x1..x2-1 and
rows y1..y2-1 (half-open, like array slicing), so a crop of (0, 0, w, h)
is the identity. All work happens in RGB; derived files are always PNG
so the byte-exactness invariants hold.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
from PIL import Image, ImageDraw, UnidentifiedImageError

from .errors import ImageDecodeError, OutOfBoundsError
from .geometry import Region

# Rec. 601 luma weights, rounded half-up and replicated to all channels
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

MaskMode = Literal["overlay", "grayscale_mask", "crop"]


@dataclass(frozen=True)
class ImageRef:
    """A decoded-and-verified pointer to an image file."""

    path: Path
    width: int
    height: int
    format: str  # PNG or JPEG

    @classmethod
    def open(cls, path: str | Path) -> "ImageRef":
        path = Path(path)
        try:
            with Image.open(path) as im:
                fmt = im.format or "PNG"
                width, height = im.size
        except (UnidentifiedImageError, OSError) as exc:
            raise ImageDecodeError(f"cannot decode {path}: {exc}") from exc
        if fmt not in ("PNG", "JPEG"):
            raise ImageDecodeError(f"{path}: unsupported format {fmt}")
        return cls(path=path, width=width, height=height, format=fmt)


@dataclass(frozen=True)
class MaskSpec:
    region: Region
    mode: MaskMode
    overlay_color: tuple[int, int, int] = (255, 0, 0)
    overlay_thickness: int = 3


def _clip_region(region: Region, width: int, height: int) -> tuple[int, int, int, int]:
    x1 = max(0, int(region.x1))
    y1 = max(0, int(region.y1))
    x2 = min(width, int(region.x2))
    y2 = min(height, int(region.y2))
    if x2 <= x1 or y2 <= y1:
        raise OutOfBoundsError(
            f"region {region.as_tuple()} lies outside a {width}x{height} image"
        )
    return x1, y1, x2, y2


def luma_gray(rgb: np.ndarray) -> np.ndarray:
    """Per-pixel Rec. 601 gray replicated to three channels.

    Computed in exact integer arithmetic so half-way values round
    deterministically (floor((299R + 587G + 114B + 500) / 1000) is
    round-half-up of the decimal weights).
    """
    r, g, b = (rgb[..., i].astype(np.int64) for i in range(3))
    y = (299 * r + 587 * g + 114 * b + 500) // 1000
    return np.repeat(y.astype(np.uint8)[..., None], 3, axis=2)


def apply_mask(pixels: np.ndarray, spec: MaskSpec) -> np.ndarray:
    """Apply a MaskSpec to an HxWx3 uint8 array and return the new array."""
    h, w = pixels.shape[:2]
    x1, y1, x2, y2 = _clip_region(spec.region, w, h)

    if spec.mode == "crop":
        return pixels[y1:y2, x1:x2].copy()

    if spec.mode == "grayscale_mask":
        out = luma_gray(pixels)
        out[y1:y2, x1:x2] = pixels[y1:y2, x1:x2]
        return out

    if spec.mode == "overlay":
        img = Image.fromarray(pixels)
        draw = ImageDraw.Draw(img)
        draw.rectangle(
            (x1, y1, x2 - 1, y2 - 1),
            outline=spec.overlay_color,
            width=spec.overlay_thickness,
        )
        return np.asarray(img)

    raise ValueError(f"unknown mask mode {spec.mode!r}")


def load_pixels(image: ImageRef) -> np.ndarray:
    try:
        with Image.open(image.path) as im:
            return np.asarray(im.convert("RGB"))
    except (UnidentifiedImageError, OSError) as exc:
        raise ImageDecodeError(f"cannot decode {image.path}: {exc}") from exc


def render_variant(image: ImageRef, spec: MaskSpec, out_path: str | Path) -> ImageRef:
    """Write the requested variant of `image` to `out_path` as PNG."""
    out = apply_mask(load_pixels(image), spec)
    return save_png(out, out_path)


def render_multi_overlay(
    image: ImageRef, regions: list[Region], out_path: str | Path, **kwargs
) -> ImageRef:
    """Draw every region's frame on one copy of the image (stage-4 input)."""
    pixels = load_pixels(image)
    for region in regions:
        pixels = apply_mask(pixels, MaskSpec(region=region, mode="overlay", **kwargs))
    return save_png(pixels, out_path)


def save_png(pixels: np.ndarray, out_path: str | Path) -> ImageRef:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(pixels).save(out_path, format="PNG")
    h, w = pixels.shape[:2]
    return ImageRef(path=out_path, width=w, height=h, format="PNG")


def variant_path(directory: str | Path, image_id: str, region_index: int, mode: str) -> Path:
    """Canonical derived-file location: <image_id>__r<k>__<mode>.png."""
    return Path(directory) / f"{image_id}__r{region_index}__{mode}.png"
