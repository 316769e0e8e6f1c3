import type { Box } from "./types";

export interface CssRect {
  left: number;
  top: number;
  width: number;
  height: number;
}

/**
 * Map a region in image pixels onto CSS pixels of the displayed image.
 * At native resolution (display size == natural size) this is identity,
 * so the highlight matches the API coordinates exactly.
 */
export function overlayRect(
  region: Box,
  displayWidth: number,
  displayHeight: number,
  naturalWidth: number,
  naturalHeight: number,
): CssRect {
  const sx = displayWidth / naturalWidth;
  const sy = displayHeight / naturalHeight;
  const [x1, y1, x2, y2] = region;
  return {
    left: x1 * sx,
    top: y1 * sy,
    width: (x2 - x1) * sx,
    height: (y2 - y1) * sy,
  };
}

/** Position an absolutely-placed highlight div over the image element. */
export function applyOverlay(el: HTMLElement, img: HTMLImageElement, region: Box): CssRect {
  const rect = overlayRect(
    region,
    img.clientWidth || img.naturalWidth,
    img.clientHeight || img.naturalHeight,
    img.naturalWidth,
    img.naturalHeight,
  );
  el.style.left = `${rect.left}px`;
  el.style.top = `${rect.top}px`;
  el.style.width = `${rect.width}px`;
  el.style.height = `${rect.height}px`;
  return rect;
}
