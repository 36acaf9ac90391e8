"""Episode loading and serialization.

An episode lives in a directory::

    episode.json       {"episode_id": str, "width": int, "height": int}
    detections.jsonl   one frame per line
    scores.jsonl       optional, one window score per line
    truth.json         optional ground truth
    frames/            optional raw frames + manifest.json

All readers reject unknown keys and report the offending line.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .config import Config
from .model import (
    Activity,
    BoundingBox,
    DetectionRecord,
    EpisodeMeta,
    GroundTruthAnnotation,
    ObjectCategory,
    ParseError,
    RegionSource,
    Stream,
    ValidationError,
    WindowScore,
)

META_FILE = "episode.json"
DETECTIONS_FILE = "detections.jsonl"
SCORES_FILE = "scores.jsonl"
TRUTH_FILE = "truth.json"
FRAMES_DIR = "frames"
MANIFEST_FILE = "manifest.json"


@dataclass(frozen=True, eq=False)
class FrameSequence:
    """Decoded frames, ``(n, H, W)`` or ``(n, H, W, 3)`` uint8, with timestamps."""

    frames: np.ndarray
    timestamps: np.ndarray

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.dtype != np.uint8 or frames.ndim not in (3, 4):
            raise ValidationError("frames must be a uint8 array of shape (n, H, W[, 3])")
        ts = np.asarray(self.timestamps, dtype=float)
        if len(ts) != len(frames):
            raise ValidationError("one timestamp per frame required")
        if np.any(np.diff(ts) <= 0):
            raise ValidationError("frame timestamps must strictly increase")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "timestamps", ts)

    def __eq__(self, other):
        if not isinstance(other, FrameSequence):
            return NotImplemented
        return (self.frames.shape == other.frames.shape
                and np.array_equal(self.frames, other.frames)
                and np.array_equal(self.timestamps, other.timestamps))

    def __len__(self):
        return len(self.frames)

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]


@dataclass(frozen=True)
class Episode:
    meta: EpisodeMeta
    detections: tuple[DetectionRecord, ...]
    scores: tuple[WindowScore, ...] = ()
    truth: GroundTruthAnnotation | None = None
    frames: FrameSequence | None = None

    @property
    def timestamps(self) -> np.ndarray:
        return np.array([d.timestamp_s for d in self.detections], dtype=float)


@dataclass(frozen=True)
class EpisodePaths:
    detections: Path
    meta: Path | None = None
    scores: Path | None = None
    truth: Path | None = None
    frames: Path | None = None

    @classmethod
    def from_dir(cls, root: str | os.PathLike) -> "EpisodePaths":
        root = Path(root)
        if not root.is_dir():
            raise FileNotFoundError(f"episode directory not found: {root}")

        def opt(name):
            p = root / name
            return p if p.exists() else None

        return cls(detections=root / DETECTIONS_FILE, meta=opt(META_FILE),
                   scores=opt(SCORES_FILE), truth=opt(TRUTH_FILE), frames=opt(FRAMES_DIR))


# --------------------------------------------------------------------- helpers


def _line_of(text: str, needle: str) -> int | None:
    idx = text.find(needle)
    if idx < 0:
        return None
    return text.count("\n", 0, idx) + 1


def _check_keys(obj, required: set[str], optional: set[str], where: str, lineno, path):
    if not isinstance(obj, dict):
        raise ParseError(f"{where} must be an object", lineno, path)
    keys = set(obj)
    unknown = keys - required - optional
    if unknown:
        raise ParseError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}", lineno, path)
    missing = required - keys
    if missing:
        raise ParseError(f"missing key(s) in {where}: {', '.join(sorted(missing))}", lineno, path)


def _int(value, name, lineno, path) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(f"{name} must be an integer, got {value!r}", lineno, path)
    return value


def _num(value, name, lineno, path) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"{name} must be a number, got {value!r}", lineno, path)
    value = float(value)
    if not math.isfinite(value):
        raise ParseError(f"{name} must be finite", lineno, path)
    return value


def _enum(kind, value, lineno, path):
    try:
        return kind(value)
    except ValueError:
        raise ValidationError(
            f"{path}:line {lineno}: unknown {kind.__name__} token {value!r}") from None


def _iter_jsonl(path: Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"malformed record: {exc.msg}", lineno, str(path)) from None


def _confidence_cutoff(min_confidence: float | Mapping) -> Mapping[ObjectCategory, float]:
    if isinstance(min_confidence, Mapping):
        return {ObjectCategory(k): float(v) for k, v in min_confidence.items()}
    return {c: float(min_confidence) for c in ObjectCategory}


def parse_box(obj, lineno=None, path=None, *, require_conf=True) -> BoundingBox:
    _check_keys(obj, {"cat", "x", "y", "w", "h"} | ({"conf"} if require_conf else set()),
                set() if require_conf else {"conf"}, "box", lineno, path)
    cat = _enum(ObjectCategory, obj["cat"], lineno, path)
    conf = _num(obj.get("conf", 1.0), "conf", lineno, path)
    try:
        return BoundingBox(_int(obj["x"], "x", lineno, path), _int(obj["y"], "y", lineno, path),
                           _int(obj["w"], "w", lineno, path), _int(obj["h"], "h", lineno, path),
                           cat, conf)
    except ValidationError as exc:
        raise ParseError(str(exc), lineno, path) from None


def box_to_dict(box: BoundingBox, with_conf: bool = True) -> dict:
    d = {"cat": box.category.value, "x": box.x, "y": box.y, "w": box.w, "h": box.h}
    if with_conf:
        d["conf"] = box.confidence
    return d


# --------------------------------------------------------------------- readers


def read_detections(path, min_confidence: float | Mapping = 0.0) -> list[DetectionRecord]:
    """Parse a detections file, dropping boxes below the confidence cutoff.

    Frames keep their record even when every box is dropped.
    """
    path = Path(path)
    cutoff = _confidence_cutoff(min_confidence)
    records: list[DetectionRecord] = []
    for lineno, obj in _iter_jsonl(path):
        _check_keys(obj, {"frame", "t", "boxes"}, set(), "record", lineno, str(path))
        frame = _int(obj["frame"], "frame", lineno, str(path))
        t = _num(obj["t"], "t", lineno, str(path))
        if not isinstance(obj["boxes"], list):
            raise ParseError("boxes must be a list", lineno, str(path))
        boxes = [parse_box(b, lineno, str(path)) for b in obj["boxes"]]
        boxes = [b for b in boxes if b.confidence >= cutoff[b.category]]
        if records:
            prev = records[-1]
            if frame <= prev.frame_index:
                raise ValidationError(f"{path}:line {lineno}: frame index {frame} does not increase")
            if t <= prev.timestamp_s:
                raise ValidationError(
                    f"{path}:line {lineno}: timestamp {t} not after {prev.timestamp_s}")
        try:
            records.append(DetectionRecord(frame, t, tuple(boxes)))
        except ValidationError as exc:
            raise ParseError(str(exc), lineno, str(path)) from None
    if not records:
        raise ValidationError(f"{path}: no detection records")
    return records


def read_scores(path, stride_s: float | None = 1.0) -> list[WindowScore]:
    """Parse window scores; ``stride_s`` enforces alignment of window starts."""
    path = Path(path)
    out: list[WindowScore] = []
    seen = set()
    for lineno, obj in _iter_jsonl(path):
        _check_keys(obj, {"activity", "region", "stream", "t0", "logits"}, set(), "score",
                    lineno, str(path))
        activity = _enum(Activity, obj["activity"], lineno, str(path))
        region = _enum(RegionSource, obj["region"], lineno, str(path))
        stream = _enum(Stream, obj["stream"], lineno, str(path))
        t0 = _num(obj["t0"], "t0", lineno, str(path))
        logits = obj["logits"]
        if not isinstance(logits, list) or len(logits) != 2:
            raise ParseError("logits must be a two-element list", lineno, str(path))
        logits = tuple(_num(v, "logit", lineno, str(path)) for v in logits)
        if stride_s:
            k = t0 / stride_s
            if abs(k - round(k)) > 1e-6:
                raise ValidationError(
                    f"{path}:line {lineno}: window start {t0} not on the {stride_s} s grid")
        try:
            score = WindowScore(activity, region, stream, t0, logits)
        except ValidationError as exc:
            raise ValidationError(f"{path}:line {lineno}: {exc}") from None
        key = (activity, region, stream, round(t0, 9))
        if key in seen:
            raise ValidationError(f"{path}:line {lineno}: duplicate score for {key[:3]} at {t0}")
        seen.add(key)
        out.append(score)
    out.sort(key=lambda s: s.sort_key)
    return out


def parse_truth(text: str, path: str = "<truth>", frame_count: int | None = None,
                ) -> GroundTruthAnnotation:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed truth: {exc.msg}", exc.lineno, path) from None
    _check_keys(obj, set(), {"activities", "hcp", "boxes"}, "truth", 1, path)
    acts_obj = obj.get("activities", {})
    if not isinstance(acts_obj, dict):
        raise ParseError("activities must be an object", _line_of(text, '"activities"'), path)
    activities = {}
    for name, ivs in acts_obj.items():
        lineno = _line_of(text, f'"{name}"')
        activity = _enum(Activity, name, lineno, path)
        if not isinstance(ivs, list) or not all(isinstance(iv, list) and len(iv) == 2 for iv in ivs):
            raise ParseError(f"{name}: intervals must be [start, end] pairs", lineno, path)
        pairs = [(_num(s, "start", lineno, path), _num(e, "end", lineno, path)) for s, e in ivs]
        try:
            activities[activity] = GroundTruthAnnotation({activity: pairs}).activities[activity]
        except ValidationError as exc:
            raise ValidationError(f"{path}:line {lineno}: {exc}") from None
    hcp = None
    if "hcp" in obj:
        lineno = _line_of(text, '"hcp"')
        if not isinstance(obj["hcp"], list):
            raise ParseError("hcp must be a list of per-frame counts", lineno, path)
        hcp = [_int(c, "hcp count", lineno, path) for c in obj["hcp"]]
        if any(c < 0 for c in hcp):
            raise ValidationError(f"{path}:line {lineno}: negative HCP count")
        if frame_count is not None and len(hcp) != frame_count:
            raise ValidationError(
                f"{path}:line {lineno}: hcp has {len(hcp)} entries for {frame_count} frames")
    boxes = None
    if "boxes" in obj and obj["boxes"] is not None:
        lineno = _line_of(text, '"boxes"')
        if not isinstance(obj["boxes"], list):
            raise ParseError("boxes must be a per-frame list", lineno, path)
        if frame_count is not None and len(obj["boxes"]) != frame_count:
            raise ValidationError(
                f"{path}:line {lineno}: boxes has {len(obj['boxes'])} frames, expected {frame_count}")
        boxes = tuple(tuple(parse_box(b, lineno, path, require_conf=False) for b in frame)
                      for frame in obj["boxes"])
    return GroundTruthAnnotation(activities, hcp, boxes)


def read_truth(path, frame_count: int | None = None) -> GroundTruthAnnotation:
    path = Path(path)
    return parse_truth(path.read_text(encoding="utf-8"), str(path), frame_count)


def read_meta(path) -> dict:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed metadata: {exc.msg}", exc.lineno, str(path)) from None
    _check_keys(obj, {"episode_id", "width", "height"}, set(), "episode metadata", 1, str(path))
    return {"episode_id": str(obj["episode_id"]),
            "width": _int(obj["width"], "width", 1, str(path)),
            "height": _int(obj["height"], "height", 1, str(path))}


def read_frames(directory) -> FrameSequence:
    directory = Path(directory)
    manifest_path = directory / MANIFEST_FILE
    text = manifest_path.read_text(encoding="utf-8")
    try:
        man = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed manifest: {exc.msg}", exc.lineno, str(manifest_path)) from None
    _check_keys(man, {"width", "height", "channels", "timestamps", "files"}, set(), "manifest",
                1, str(manifest_path))
    w, h, c = man["width"], man["height"], man["channels"]
    if c not in (1, 3):
        raise ValidationError(f"{manifest_path}: channels must be 1 or 3")
    if len(man["files"]) != len(man["timestamps"]):
        raise ValidationError(f"{manifest_path}: files and timestamps differ in length")
    shape = (h, w) if c == 1 else (h, w, 3)
    frames = []
    for name in man["files"]:
        raw = np.fromfile(directory / name, dtype=np.uint8)
        if raw.size != int(np.prod(shape)):
            raise ValidationError(f"{directory / name}: expected {np.prod(shape)} bytes, got {raw.size}")
        frames.append(raw.reshape(shape))
    return FrameSequence(np.stack(frames), np.asarray(man["timestamps"], dtype=float))


def compute_native_fps(timestamps: Sequence[float]) -> float:
    if len(timestamps) < 2:
        return 0.0
    return float((len(timestamps) - 1) / (timestamps[-1] - timestamps[0]))


def load_episode(source, config: Config | None = None, *, meta: Mapping | None = None) -> Episode:
    """Load and validate an episode.

    Args:
        source: episode directory or :class:`EpisodePaths`.
        config: supplies per-category ``min_confidence`` and the window grid.
        meta: overrides for ``episode_id``/``width``/``height`` when no
            ``episode.json`` exists.
    """
    config = config or Config()
    paths = source if isinstance(source, EpisodePaths) else EpisodePaths.from_dir(source)
    info = dict(read_meta(paths.meta)) if paths.meta else {}
    info.update(meta or {})
    if not {"width", "height"} <= set(info):
        raise ValidationError("episode frame size unknown: provide episode.json or meta overrides")

    detections = read_detections(paths.detections, config.min_confidence)
    ts = [d.timestamp_s for d in detections]
    episode_meta = EpisodeMeta(
        episode_id=info.get("episode_id", Path(paths.detections).parent.name),
        im_width=info["width"], im_height=info["height"],
        native_fps=compute_native_fps(ts), frame_count=len(detections),
        first_ts=ts[0], last_ts=ts[-1])
    scores = read_scores(paths.scores, config.test_stride / config.target_fps) if paths.scores else []
    truth = read_truth(paths.truth, len(detections)) if paths.truth else None
    frames = read_frames(paths.frames) if paths.frames else None
    if frames is not None and (frames.width, frames.height) != (episode_meta.im_width,
                                                                  episode_meta.im_height):
        raise ValidationError("frame buffer dimensions disagree with episode metadata")
    return Episode(episode_meta, tuple(detections), tuple(scores), truth, frames)


def admit_for_training(meta: EpisodeMeta, min_fps: float = 5.0) -> bool:
    """True when the episode's native rate is strictly above ``min_fps``."""
    return meta.native_fps > min_fps


# --------------------------------------------------------------------- writers


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(", ", ": "))


def write_detections(path, records: Iterable[DetectionRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(_dumps({"frame": r.frame_index, "t": r.timestamp_s,
                             "boxes": [box_to_dict(b) for b in r.boxes]}) + "\n")


def write_scores(path, scores: Iterable[WindowScore]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in scores:
            fh.write(_dumps({"activity": s.activity.value, "region": s.region_source.value,
                             "stream": s.stream.value, "t0": s.window_start_s,
                             "logits": list(s.logits)}) + "\n")


def truth_to_dict(truth: GroundTruthAnnotation) -> dict:
    out: dict = {"activities": {a.value: [list(iv) for iv in ivs]
                                for a, ivs in truth.activities.items()}}
    if truth.hcp is not None:
        out["hcp"] = list(truth.hcp)
    if truth.boxes is not None:
        out["boxes"] = [[box_to_dict(b, with_conf=False) for b in frame] for frame in truth.boxes]
    return out


def write_truth(path, truth: GroundTruthAnnotation) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(truth_to_dict(truth), fh, indent=1)
        fh.write("\n")


def write_meta(path, meta: EpisodeMeta) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump({"episode_id": meta.episode_id, "width": meta.im_width,
                   "height": meta.im_height}, fh, indent=1)
        fh.write("\n")


def write_frames(directory, frames: FrameSequence) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = [f"frame_{i:06d}.raw" for i in range(len(frames))]
    for name, frame in zip(names, frames.frames):
        np.ascontiguousarray(frame).tofile(directory / name)
    manifest = {"width": frames.width, "height": frames.height,
                "channels": 1 if frames.frames.ndim == 3 else 3,
                "timestamps": [float(t) for t in frames.timestamps], "files": names}
    with open(directory / MANIFEST_FILE, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")


def write_episode(directory, episode: Episode) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_meta(directory / META_FILE, episode.meta)
    write_detections(directory / DETECTIONS_FILE, episode.detections)
    if episode.scores:
        write_scores(directory / SCORES_FILE, episode.scores)
    if episode.truth is not None:
        write_truth(directory / TRUTH_FILE, episode.truth)
    if episode.frames is not None:
        write_frames(directory / FRAMES_DIR, episode.frames)
    return directory
