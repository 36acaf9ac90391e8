"""Fixed-rate resampling by linear frame interpolation, and analysis windows."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .ingest import FrameSequence
from .model import NoTrackError, RegionSpec, Track, ValidationError, round_half_up


def lfi_weights(t1: float, t2: float, ti: float) -> tuple[float, float]:
    """Blend weights ``(c1, c2)`` for the frames at ``t1`` and ``t2``.

    Each frame is weighted by its proximity to ``ti``, so ``ti == t1``
    reproduces the first frame exactly.
    """
    if not t2 > t1:
        raise ValidationError(f"interpolation needs t1 < t2, got t1={t1} t2={t2}")
    if not t1 <= ti <= t2:
        raise ValidationError(f"time {ti} outside [{t1}, {t2}]")
    span = t2 - t1
    return (t2 - ti) / span, (ti - t1) / span


@dataclass(frozen=True, eq=False)
class ResampleGrid:
    target_fps: float
    times: np.ndarray

    @classmethod
    def covering(cls, first_ts: float, last_ts: float, target_fps: float = 15.0) -> "ResampleGrid":
        if target_fps <= 0:
            raise ValidationError("target_fps must be positive")
        n = math.floor((last_ts - first_ts) * target_fps + 1e-9)
        return cls(target_fps, first_ts + np.arange(n + 1) / target_fps)

    def __len__(self):
        return len(self.times)


def bracket(src_ts: np.ndarray, grid_ts: np.ndarray):
    """Indices of the bracketing source samples and their blend weights.

    Grid times outside the source span clamp to the nearest end sample.
    """
    src_ts = np.asarray(src_ts, dtype=float)
    grid_ts = np.asarray(grid_ts, dtype=float)
    if len(src_ts) < 2:
        raise ValidationError("resampling needs at least two source samples")
    if np.any(np.diff(src_ts) <= 0):
        raise ValidationError("source timestamps must strictly increase")
    hi = np.clip(np.searchsorted(src_ts, grid_ts, side="right"), 1, len(src_ts) - 1)
    lo = hi - 1
    t = np.clip(grid_ts, src_ts[0], src_ts[-1])
    c1 = (src_ts[hi] - t) / (src_ts[hi] - src_ts[lo])
    c1 = np.clip(c1, 0.0, 1.0)
    return lo, hi, c1, 1.0 - c1


def resample_frames(frames: FrameSequence, grid: ResampleGrid) -> FrameSequence:
    """Per-pixel blend of the two source frames bracketing each grid time."""
    src = np.asarray(frames.frames)
    lo, hi, c1, c2 = bracket(frames.timestamps, grid.times)
    out = np.empty((len(grid),) + src.shape[1:], dtype=np.uint8)
    for k in range(len(grid)):
        v = c1[k] * src[lo[k]].astype(np.float64) + c2[k] * src[hi[k]].astype(np.float64)
        out[k] = np.clip(np.floor(v + 0.5), 0, 255).astype(np.uint8)
    return FrameSequence(out, grid.times.copy())


def resample_positions(positions: np.ndarray, src_ts: np.ndarray, grid: ResampleGrid) -> np.ndarray:
    pos = np.asarray(positions, dtype=float)
    if len(pos) == 0:
        raise NoTrackError("empty coordinate stream")
    lo, hi, c1, c2 = bracket(src_ts, grid.times)
    return round_half_up(c1[:, None] * pos[lo] + c2[:, None] * pos[hi])


def resample_track(track: Track, grid: ResampleGrid) -> Track:
    """Interpolate track coordinates onto the grid; flags come from the nearer source frame."""
    if len(track) == 0:
        raise NoTrackError(f"empty {track.category.value} track")
    lo, hi, c1, _ = bracket(track.timestamps, grid.times)
    centers = resample_positions(track.centers, track.timestamps, grid)
    nearer = np.where(c1 >= 0.5, lo, hi)
    return Track(track.category, centers, track.flags[nearer], grid.times.copy())


def resample_region(region: RegionSpec, src_ts: np.ndarray, grid: ResampleGrid) -> RegionSpec:
    if region.fixed:
        return region
    tl = resample_positions(region.top_lefts, src_ts, grid)
    return RegionSpec(region.source, region.side_px, tl)


def crop_region(frames: FrameSequence, region: RegionSpec, out_size: int = 256) -> np.ndarray:
    """Crop the region from every frame and resize it by nearest neighbour."""
    idx = np.minimum((np.arange(out_size) * region.side_px) // out_size, region.side_px - 1)
    crops = []
    for k, frame in enumerate(frames.frames):
        x, y = region.at(k)
        patch = frame[y:y + region.side_px, x:x + region.side_px]
        crops.append(patch[idx][:, idx])
    return np.stack(crops)


@dataclass(frozen=True)
class AnalysisWindow:
    start_frame: int
    length_frames: int
    stride_frames: int
    fps: float

    @property
    def start_s(self) -> float:
        return self.start_frame / self.fps

    @property
    def end_s(self) -> float:
        return (self.start_frame + self.length_frames) / self.fps


def make_windows(duration_s: float, mode: str = "test", fps: float = 15.0,
                 length_frames: int = 45, train_stride: int = 22,
                 test_stride: int = 15) -> list[AnalysisWindow]:
    """Sliding windows from time zero whose ends stay within ``duration_s``.

    Test windows advance one second at 15 fps (two-thirds overlap); training
    windows advance by half a window, rounded down.
    """
    if mode not in ("train", "test"):
        raise ValidationError(f"unknown window mode {mode!r}")
    stride = test_stride if mode == "test" else train_stride
    total = math.floor(duration_s * fps + 1e-9)
    if total < length_frames:
        warnings.warn(f"episode of {duration_s} s is shorter than one analysis window",
                      stacklevel=2)
        return []
    count = (total - length_frames) // stride + 1
    return [AnalysisWindow(k * stride, length_frames, stride, fps) for k in range(count)]
