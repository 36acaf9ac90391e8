"""Detection-to-track post-processing for the single-instance objects.

The chain is localize -> fill_gaps -> remove_short_peaks -> smooth, after
which each smoothed track is turned into per-frame square regions.
Position arrays are ``(n, 2)`` with ``(x, y)`` columns; ``NaN`` rows mark
frames without an observation.
"""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from .config import Config
from .model import (
    SINGLE_INSTANCE,
    ConfigError,
    DetectionRecord,
    NoTrackError,
    ObjectCategory,
    Provenance,
    RegionSource,
    RegionSpec,
    Track,
    ValidationError,
)

logger = logging.getLogger(__name__)


def _records(source) -> Sequence[DetectionRecord]:
    return source.detections if hasattr(source, "detections") else source


def localize(episode, category: ObjectCategory) -> np.ndarray:
    """Center of the most confident box of ``category`` in each frame.

    Equal confidences resolve to the box with the smallest top-left
    ``(y, x)``. Frames without such a box are ``NaN``.
    """
    category = ObjectCategory(category)
    if not category.single_instance:
        raise ValidationError(f"{category.value} is not a single-instance category")
    records = _records(episode)
    out = np.full((len(records), 2), np.nan)
    for i, rec in enumerate(records):
        boxes = rec.of(category)
        if boxes:
            best = min(boxes, key=lambda b: (-b.confidence, b.y, b.x, b.h, b.w))
            out[i] = best.center
    return out


def fill_gaps(raw: np.ndarray) -> np.ndarray:
    """Hold the last observed position over gaps; back-fill leading gaps."""
    raw = np.asarray(raw, dtype=float)
    observed = ~np.isnan(raw).any(axis=1)
    if not observed.any():
        raise NoTrackError("no observed position to fill from")
    idx = np.where(observed, np.arange(len(raw)), -1)
    idx = np.maximum.accumulate(idx)
    idx[idx < 0] = np.argmax(observed)
    return raw[idx].copy()


def _peak_scan(positions: np.ndarray, max_peak_frames: int, jump_px: float):
    out = np.array(positions, dtype=float, copy=True)
    replaced = np.zeros(len(out), dtype=bool)
    n = len(out)
    for i in range(1, n):
        anchor = out[i - 1]
        if np.hypot(*(out[i] - anchor)) <= jump_px:
            continue
        j = i
        while j < n and j - i <= max_peak_frames and np.hypot(*(out[j] - anchor)) > jump_px:
            j += 1
        # frames i..j-1 lie away from the anchor; j is the first frame back
        if j < n and j - i <= max_peak_frames:
            out[i:j] = anchor
            replaced[i:j] = True
    return out, replaced


def remove_short_peaks(positions: np.ndarray, max_peak_frames: int = 7,
                       jump_px: float = 150.0) -> np.ndarray:
    """Replace brief excursions with the position held before them.

    An excursion is a run of consecutive frames farther than ``jump_px``
    (Euclidean) from the frame preceding the run. A run of at most
    ``max_peak_frames`` frames that is followed by a frame back within
    ``jump_px`` is overwritten with the preceding position. Longer runs,
    and runs that reach the end of the sequence, are kept.
    """
    if np.isnan(positions).any():
        raise ValidationError("remove_short_peaks expects gap-filled positions")
    return _peak_scan(positions, max_peak_frames, jump_px)[0]


def smooth(positions: np.ndarray, window_frames: int = 15) -> np.ndarray:
    """Centered moving average, rounded half-up to integer pixels.

    Near the sequence ends the window is cut to the samples that exist.
    Arithmetic is done on integers so the rounding is exact.
    """
    if window_frames < 1 or window_frames % 2 == 0:
        raise ConfigError("window_frames must be a positive odd integer")
    pos = np.asarray(positions, dtype=float)
    if np.isnan(pos).any():
        raise ValidationError("smooth expects gap-filled positions")
    ipos = np.rint(pos).astype(np.int64)
    if not np.array_equal(ipos, pos):
        raise ValidationError("smooth expects integer pixel positions")
    n = len(ipos)
    half = window_frames // 2
    csum = np.vstack([np.zeros((1, 2), np.int64), np.cumsum(ipos, axis=0)])
    i = np.arange(n)
    lo = np.maximum(i - half, 0)
    hi = np.minimum(i + half + 1, n)
    sums = csum[hi] - csum[lo]
    counts = (hi - lo)[:, None]
    return (2 * sums + counts) // (2 * counts)


def track_object(episode, category: ObjectCategory, config: Config | None = None) -> Track:
    """Run the full post-processing chain for one category."""
    config = config or Config()
    category = ObjectCategory(category)
    records = _records(episode)
    raw = localize(records, category)
    observed = ~np.isnan(raw).any(axis=1)
    filled = fill_gaps(raw)
    cleaned, replaced = _peak_scan(filled, config.max_peak_frames, config.jump_px)
    centers = smooth(cleaned, config.smoothing_window)
    flags = np.where(observed, int(Provenance.OBSERVED), int(Provenance.GAP_FILLED))
    flags[replaced] = int(Provenance.PEAK_REMOVED)
    flags |= int(Provenance.SMOOTHED)
    ts = np.array([r.timestamp_s for r in records], dtype=float)
    return Track(category, centers, flags, ts)


def track_episode(episode, config: Config | None = None) -> dict[ObjectCategory, Track]:
    """Tracks for every single-instance category that was observed at least once."""
    tracks = {}
    for category in SINGLE_INSTANCE:
        try:
            tracks[category] = track_object(episode, category, config)
        except NoTrackError:
            logger.warning("no %s detections; category has no track", category.value)
    return tracks


def clamp_top_left(centers: np.ndarray, side_px: int, im_width: int, im_height: int) -> np.ndarray:
    if side_px > min(im_width, im_height):
        raise ConfigError(f"region side {side_px} exceeds frame size {im_width}x{im_height}")
    tl = np.asarray(centers, dtype=np.int64) - side_px // 2
    tl[:, 0] = np.clip(tl[:, 0], 0, im_width - side_px)
    tl[:, 1] = np.clip(tl[:, 1], 0, im_height - side_px)
    return tl


def propose_object_region(track: Track, im_width: int, im_height: int,
                          side_px: int = 500) -> RegionSpec:
    """Per-frame square centered on the track, shifted (never shrunk) into the frame."""
    tl = clamp_top_left(track.centers, side_px, im_width, im_height)
    return RegionSpec(RegionSource(track.category.value), side_px, tl)
