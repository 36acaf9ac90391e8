"""Hand-detection heatmap and the fixed newborn region.

Every HCPH box adds one to each pixel it covers; the newborn region is
the square window with the largest accumulated mass.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .model import ConfigError, ObjectCategory, RegionSource, RegionSpec


def accumulate_heatmap(detections, im_width: int, im_height: int) -> np.ndarray:
    """Heatmap of shape ``(im_height, im_width)``, indexed ``hm[y, x]``.

    Boxes are clipped to the frame. Confidence plays no role.
    """
    records = detections.detections if hasattr(detections, "detections") else detections
    diff = np.zeros((im_height + 1, im_width + 1), dtype=np.int64)
    rows, cols, vals = [], [], []
    for rec in records:
        for box in rec.of(ObjectCategory.HCPH):
            ext = box.clipped(im_width, im_height)
            if ext is None:
                continue
            x0, y0, x1, y1 = ext
            rows += [y0, y0, y1, y1]
            cols += [x0, x1, x0, x1]
            vals += [1, -1, -1, 1]
    if vals:
        np.add.at(diff, (np.array(rows), np.array(cols)), np.array(vals))
    return diff.cumsum(axis=0).cumsum(axis=1)[:im_height, :im_width]


def window_sums(hm: np.ndarray, side: int) -> np.ndarray:
    """Sum over every ``side x side`` window; entry ``[y, x]`` is the window at top-left (x, y)."""
    h, w = hm.shape
    sat = np.zeros((h + 1, w + 1), dtype=np.int64)
    sat[1:, 1:] = hm.cumsum(axis=0).cumsum(axis=1)
    return sat[side:, side:] - sat[:-side, side:] - sat[side:, :-side] + sat[:-side, :-side]


def select_newborn_region(hm: np.ndarray, side_px: int = 700) -> RegionSpec:
    """Top-left of the window with maximal heatmap mass; ties go to smallest (y, x)."""
    h, w = hm.shape
    if side_px < 1 or side_px > min(h, w):
        raise ConfigError(f"region side {side_px} does not fit a {w}x{h} frame")
    sums = window_sums(hm, side_px)
    # argmax on the row-major array returns the first maximum: smallest y, then x
    y, x = np.unravel_index(int(np.argmax(sums)), sums.shape)
    return RegionSpec(RegionSource.NEWBORN, side_px, [(int(x), int(y))])


def write_pgm(path, hm: np.ndarray) -> None:
    """Binary graymap, linearly scaled so the hottest pixel is white."""
    peak = int(hm.max()) if hm.size else 0
    img = np.zeros(hm.shape, dtype=np.uint8) if peak == 0 else \
        (hm.astype(np.int64) * 255 // peak).astype(np.uint8)
    with open(Path(path), "wb") as fh:
        fh.write(f"P5\n{hm.shape[1]} {hm.shape[0]}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
