"""Shared domain types, enumerations and the activity routing table."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np


class TlfError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(TlfError, ValueError):
    """Input violates a documented invariant."""


class ParseError(ValidationError):
    """A record could not be parsed. Carries the 1-based line number."""

    def __init__(self, message: str, lineno: int | None = None, path: str | None = None):
        self.lineno = lineno
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if lineno is not None:
            where += f"line {lineno}: "
        elif where:
            where += " "
        super().__init__(where + message)


class ConfigError(TlfError, ValueError):
    pass


class NoTrackError(TlfError):
    """Raised when a category has no observation anywhere in the episode."""


class MissingScoreError(TlfError):
    pass


class ObjectCategory(str, enum.Enum):
    HCPH = "HCPH"
    BMR = "BMR"
    HRS = "HRS"
    SD = "SD"

    @property
    def single_instance(self) -> bool:
        return self is not ObjectCategory.HCPH


SINGLE_INSTANCE = (ObjectCategory.BMR, ObjectCategory.HRS, ObjectCategory.SD)


class Activity(str, enum.Enum):
    UNCOVERED = "uncovered"
    STIMULATION = "stimulation"
    VENTILATION = "ventilation"
    SUCTION = "suction"
    ATTACH_ADJUST_HRS = "attach_adjust_hrs"
    REMOVE_HRS = "remove_hrs"


class RegionSource(str, enum.Enum):
    BMR = "BMR"
    HRS = "HRS"
    SD = "SD"
    NEWBORN = "newborn"


class Stream(str, enum.Enum):
    APPEARANCE = "appearance"
    FLOW = "flow"


_BOTH = frozenset({Stream.APPEARANCE, Stream.FLOW})

# Object region first, newborn region second.
ROUTING: Mapping[Activity, tuple[tuple[RegionSource, ...], frozenset[Stream]]] = {
    Activity.UNCOVERED: ((RegionSource.NEWBORN,), frozenset({Stream.APPEARANCE})),
    Activity.STIMULATION: ((RegionSource.NEWBORN,), _BOTH),
    Activity.VENTILATION: ((RegionSource.BMR, RegionSource.NEWBORN), _BOTH),
    Activity.SUCTION: ((RegionSource.SD, RegionSource.NEWBORN), _BOTH),
    Activity.ATTACH_ADJUST_HRS: ((RegionSource.HRS, RegionSource.NEWBORN), _BOTH),
    Activity.REMOVE_HRS: ((RegionSource.HRS, RegionSource.NEWBORN), _BOTH),
}

# Object category whose track anchors each object-dependent activity.
ACTIVITY_OBJECT: Mapping[Activity, ObjectCategory] = {
    Activity.VENTILATION: ObjectCategory.BMR,
    Activity.SUCTION: ObjectCategory.SD,
    Activity.ATTACH_ADJUST_HRS: ObjectCategory.HRS,
    Activity.REMOVE_HRS: ObjectCategory.HRS,
}


def routing_for(activity: Activity | str) -> tuple[tuple[RegionSource, ...], frozenset[Stream]]:
    """Return the ordered region sources and the stream set used for ``activity``."""
    return ROUTING[Activity(activity)]


def model_slots() -> list[tuple[Activity, Stream]]:
    """Distinct (activity, stream) classifier slots implied by the routing table."""
    return [(a, s) for a in Activity for s in Stream if s in ROUTING[a][1]]


def is_valid_route(activity: Activity, region: RegionSource, stream: Stream) -> bool:
    regions, streams = ROUTING[activity]
    return region in regions and stream in streams


def round_half_up(value):
    """Round to the nearest integer with ties going up (toward +inf)."""
    if isinstance(value, np.ndarray):
        return np.floor(value + 0.5).astype(np.int64)
    return int(math.floor(value + 0.5))


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in pixel coordinates; ``(x, y)`` is the top-left corner."""

    x: int
    y: int
    w: int
    h: int
    category: ObjectCategory
    confidence: float = 1.0

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValidationError(f"box must have positive size, got w={self.w} h={self.h}")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValidationError(f"confidence {self.confidence} outside [0, 1]")
        if not isinstance(self.category, ObjectCategory):
            object.__setattr__(self, "category", ObjectCategory(self.category))

    @property
    def center(self) -> tuple[int, int]:
        return round_half_up(self.x + self.w / 2), round_half_up(self.y + self.h / 2)

    @property
    def area(self) -> int:
        return self.w * self.h

    def clipped(self, width: int, height: int) -> tuple[int, int, int, int] | None:
        """Pixel extent ``(x0, y0, x1, y1)`` (exclusive end) inside the frame, or None."""
        x0, y0 = max(self.x, 0), max(self.y, 0)
        x1, y1 = min(self.x + self.w, width), min(self.y + self.h, height)
        if x1 <= x0 or y1 <= y0:
            return None
        return x0, y0, x1, y1


@dataclass(frozen=True)
class DetectionRecord:
    frame_index: int
    timestamp_s: float
    boxes: tuple[BoundingBox, ...] = ()

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValidationError(f"negative frame index {self.frame_index}")
        if not (self.timestamp_s >= 0 and math.isfinite(self.timestamp_s)):
            raise ValidationError(f"invalid timestamp {self.timestamp_s}")
        object.__setattr__(self, "boxes", tuple(self.boxes))

    def of(self, category: ObjectCategory) -> list[BoundingBox]:
        return [b for b in self.boxes if b.category is category]


@dataclass(frozen=True)
class EpisodeMeta:
    episode_id: str
    im_width: int
    im_height: int
    native_fps: float
    frame_count: int
    first_ts: float = 0.0
    last_ts: float = 0.0

    def __post_init__(self):
        if self.im_width <= 0 or self.im_height <= 0:
            raise ValidationError("frame dimensions must be positive")
        if self.frame_count < 1:
            raise ValidationError("episode needs at least one frame")

    @property
    def duration_s(self) -> float:
        return self.last_ts - self.first_ts


class Provenance(enum.IntFlag):
    OBSERVED = 1
    GAP_FILLED = 2
    PEAK_REMOVED = 4
    SMOOTHED = 8


def provenance_label(flags: int) -> str:
    return "|".join(p.name.lower() for p in Provenance if flags & p) or "none"


def parse_provenance(label: str) -> int:
    if label == "none":
        return 0
    value = 0
    for part in label.split("|"):
        try:
            value |= Provenance[part.upper()]
        except KeyError:
            raise ValidationError(f"unknown provenance flag {part!r}") from None
    return value


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Track:
    """Per-frame center position of one single-instance object.

    ``centers`` is an ``(n, 2)`` integer array of ``(x, y)``; ``flags`` holds
    :class:`Provenance` bits per frame; ``timestamps`` gives the clock.
    """

    category: ObjectCategory
    centers: np.ndarray
    flags: np.ndarray
    timestamps: np.ndarray

    def __post_init__(self):
        centers = np.asarray(self.centers)
        if centers.ndim != 2 or centers.shape[1] != 2:
            raise ValidationError("track centers must have shape (n, 2)")
        if len(self.flags) != len(centers) or len(self.timestamps) != len(centers):
            raise ValidationError("track arrays must have equal length")
        object.__setattr__(self, "centers", _frozen(centers.astype(np.int64)))
        object.__setattr__(self, "flags", _frozen(np.asarray(self.flags, dtype=np.uint8)))
        object.__setattr__(self, "timestamps", _frozen(np.asarray(self.timestamps, dtype=float)))

    def __len__(self):
        return len(self.centers)


@dataclass(frozen=True, eq=False)
class RegionSpec:
    """Square analysis window.

    Object regions carry one top-left per frame; the newborn region carries
    a single row and is constant over the episode.
    """

    source: RegionSource
    side_px: int
    top_lefts: np.ndarray

    def __post_init__(self):
        tl = np.asarray(self.top_lefts, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "top_lefts", _frozen(tl))
        object.__setattr__(self, "source", RegionSource(self.source))

    @property
    def fixed(self) -> bool:
        return self.source is RegionSource.NEWBORN

    @property
    def top_left(self) -> tuple[int, int]:
        x, y = self.top_lefts[0]
        return int(x), int(y)

    def at(self, frame: int) -> tuple[int, int]:
        x, y = self.top_lefts[0 if self.fixed else frame]
        return int(x), int(y)

    def contains(self, frame: int, point: tuple[float, float]) -> bool:
        x, y = self.at(frame)
        return x <= point[0] < x + self.side_px and y <= point[1] < y + self.side_px


@dataclass(frozen=True)
class WindowScore:
    activity: Activity
    region_source: RegionSource
    stream: Stream
    window_start_s: float
    logits: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "activity", Activity(self.activity))
        object.__setattr__(self, "region_source", RegionSource(self.region_source))
        object.__setattr__(self, "stream", Stream(self.stream))
        logits = tuple(float(v) for v in self.logits)
        if len(logits) != 2 or not all(math.isfinite(v) for v in logits):
            raise ValidationError(f"logits must be a finite pair, got {self.logits!r}")
        object.__setattr__(self, "logits", logits)
        if not (self.window_start_s >= 0 and math.isfinite(self.window_start_s)):
            raise ValidationError(f"invalid window start {self.window_start_s}")
        if not is_valid_route(self.activity, self.region_source, self.stream):
            raise ValidationError(
                f"{self.activity.value} is not scored on region {self.region_source.value} "
                f"with stream {self.stream.value}"
            )

    @property
    def sort_key(self):
        acts = list(Activity)
        return (acts.index(self.activity), self.window_start_s,
                list(RegionSource).index(self.region_source), list(Stream).index(self.stream))


@dataclass(frozen=True, eq=False)
class ActivityTimeline:
    activity: Activity
    probs: np.ndarray
    binary: np.ndarray
    threshold_used: float
    sample_period_s: float = 1.0

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        binary = np.asarray(self.binary, dtype=np.int8)
        if probs.shape != binary.shape:
            raise ValidationError("probs and binary must have equal length")
        object.__setattr__(self, "probs", _frozen(probs))
        object.__setattr__(self, "binary", _frozen(binary))

    def __len__(self):
        return len(self.probs)


@dataclass(frozen=True, eq=False)
class HcpTimeline:
    counts: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "counts", _frozen(np.asarray(self.counts, dtype=np.int64)))


def _check_intervals(activity: Activity, intervals: Sequence[Sequence[float]]) -> tuple[tuple[float, float], ...]:
    out = sorted((float(s), float(e)) for s, e in intervals)
    for s, e in out:
        if not s < e:
            raise ValidationError(f"{activity.value}: interval start {s} must precede end {e}")
    for (s0, e0), (s1, _) in zip(out, out[1:]):
        if s1 < e0:
            raise ValidationError(f"{activity.value}: intervals [{s0}, {e0}] and [{s1}, ...] overlap")
    return tuple(out)


@dataclass(frozen=True)
class GroundTruthAnnotation:
    activities: Mapping[Activity, tuple[tuple[float, float], ...]]
    hcp: tuple[int, ...] | None = None
    boxes: tuple[tuple[BoundingBox, ...], ...] | None = None

    def __post_init__(self):
        acts = {}
        for a, ivs in self.activities.items():
            a = Activity(a)
            acts[a] = _check_intervals(a, ivs)
        object.__setattr__(self, "activities", {a: acts[a] for a in Activity if a in acts})
        if self.hcp is not None:
            hcp = tuple(int(c) for c in self.hcp)
            if any(c < 0 for c in hcp):
                raise ValidationError("negative HCP count")
            object.__setattr__(self, "hcp", hcp)
        if self.boxes is not None:
            object.__setattr__(self, "boxes", tuple(tuple(b) for b in self.boxes))

    def __hash__(self):
        return hash((tuple(self.activities.items()), self.hcp, self.boxes))

    def intervals(self, activity: Activity) -> tuple[tuple[float, float], ...]:
        return self.activities.get(Activity(activity), ())
