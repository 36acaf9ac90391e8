"""Synthetic episodes with known ground truth.

A :class:`Scenario` scripts activity intervals, object trajectories, hand
counts and noise levels. Each noise source draws from its own generator
and always draws the same number of values, so switching one source on
or off leaves the others untouched.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .ingest import Episode, FrameSequence, compute_native_fps
from .model import (
    SINGLE_INSTANCE,
    Activity,
    BoundingBox,
    DetectionRecord,
    EpisodeMeta,
    GroundTruthAnnotation,
    ObjectCategory,
    ValidationError,
    WindowScore,
    round_half_up,
    routing_for,
)
from .evaluation import rasterize
from .temporal import make_windows


@dataclass
class Noise:
    dropout: float = 0.0
    fp_rate: float = 0.0
    fp_min_displacement: float = 300.0
    fp_max_displacement: float = 600.0
    conf_base: float = 0.9
    conf_jitter: float = 0.0
    logit_margin: float = 5.0
    logit_sigma: float = 0.0


@dataclass
class Scenario:
    seed: int = 0
    episode_id: str = "synthetic"
    duration_s: float = 60.0
    fps: float = 15.0
    width: int = 1920
    height: int = 1080
    activities: dict = field(default_factory=dict)
    exclusive: list = field(default_factory=lambda: [["ventilation", "suction"]])
    objects: dict = field(default_factory=dict)
    newborn_center: list = field(default_factory=lambda: [960, 600])
    hand_radius: float = 150.0
    hand_size: list = field(default_factory=lambda: [90, 90])
    hcp: list = field(default_factory=list)
    noise: Noise = field(default_factory=Noise)
    background: int = 40

    def validate(self) -> None:
        if self.duration_s <= 0 or self.fps <= 0:
            raise ValidationError("duration_s and fps must be positive")
        for name, ivs in self.activities.items():
            Activity(name)
            for s, e in ivs:
                if not 0 <= s < e <= self.duration_s:
                    raise ValidationError(
                        f"{name}: interval [{s}, {e}] outside the {self.duration_s} s episode")
        GroundTruthAnnotation(self.activities)
        for a, b in self.exclusive:
            for s0, e0 in self.activities.get(a, []):
                for s1, e1 in self.activities.get(b, []):
                    if s0 < e1 and s1 < e0:
                        raise ValidationError(f"{a} and {b} are exclusive but overlap")
        for name, spec in self.objects.items():
            if not ObjectCategory(name).single_instance:
                raise ValidationError(f"{name} cannot be scripted as a single object")
            times = [w[0] for w in spec["waypoints"]]
            if not times or any(b < a for a, b in zip(times, times[1:])):
                raise ValidationError(f"{name}: waypoint times must be non-decreasing")
        for s, e, c in self.hcp:
            if not (s < e and c >= 0):
                raise ValidationError(f"bad HCP segment {[s, e, c]}")
        n = self.noise
        if not (0 <= n.dropout <= 1 and 0 <= n.fp_rate <= 1):
            raise ValidationError("dropout and fp_rate must lie in [0, 1]")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "Scenario":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValidationError(f"unknown scenario key(s): {', '.join(sorted(unknown))}")
        obj = dict(obj)
        if "noise" in obj:
            noise_known = {f.name for f in dataclasses.fields(Noise)}
            bad = set(obj["noise"]) - noise_known
            if bad:
                raise ValidationError(f"unknown noise key(s): {', '.join(sorted(bad))}")
            obj["noise"] = Noise(**obj["noise"])
        scenario = cls(**obj)
        scenario.validate()
        return scenario


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        try:
            return Scenario.from_dict(json.load(fh))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}:line {exc.lineno}: {exc.msg}") from None


def save_scenario(path, scenario: Scenario) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(scenario.to_dict(), fh, indent=2)
        fh.write("\n")


def default_scenario(duration_s: float = 300.0, seed: int = 0, noise: Noise | None = None,
                     episode_id: str | None = None) -> Scenario:
    """All six activities scripted over ``duration_s`` (at least 60 s).

    Interval boundaries scale with the duration and stay out of the final
    3 s, where seconds inherit the last window. Objects move at about
    2 px per frame between resting places.
    """
    if duration_s < 60:
        raise ValidationError("the default script needs at least 60 s")
    f = duration_s / 300.0

    def iv(*pairs):
        return [[float(round(s * f)), float(round(e * f))] for s, e in pairs]

    activities = {
        "uncovered": iv((5, 120), (150, 285)),
        "stimulation": iv((10, 40), (130, 160)),
        "ventilation": iv((45, 100), (170, 240)),
        "suction": iv((102, 116), (245, 262)),
        "attach_adjust_hrs": iv((60, 75)),
        "remove_hrs": iv((270, 282)),
    }

    def moves(rest, work, spans):
        # rest -> work over 10 s before each span starts, back over 10 s after it ends
        pts = [[0.0, *rest]]
        for s, e in spans:
            pts += [[max(s - 10.0, pts[-1][0]), *rest], [s, *work], [e, *work],
                    [min(e + 10.0, duration_s), *rest]]
        return pts

    objects = {
        "BMR": {"size": [140, 100], "waypoints": moves((500, 350), (880, 520), activities["ventilation"])},
        "SD": {"size": [60, 40], "waypoints": moves((1450, 330), (1050, 560), activities["suction"])},
        "HRS": {"size": [70, 50], "waypoints": moves(
            (1400, 820), (1100, 650), activities["attach_adjust_hrs"] + activities["remove_hrs"])},
    }
    hcp = [[0.0, 3.0, 0], [3.0, round(90 * f), 2], [round(90 * f), round(200 * f), 3],
           [round(200 * f), duration_s, 2]]
    scenario = Scenario(seed=seed, episode_id=episode_id or f"synthetic-{seed:04d}",
                        duration_s=duration_s, activities=activities, objects=objects,
                        hcp=hcp, noise=noise or Noise())
    scenario.validate()
    return scenario


# ----------------------------------------------------------------- sampling


def timestamps(scenario: Scenario) -> np.ndarray:
    n = round(scenario.duration_s * scenario.fps)
    return np.arange(n + 1) / scenario.fps


def true_centers(scenario: Scenario, category: ObjectCategory, ts: np.ndarray) -> np.ndarray:
    wp = np.asarray(scenario.objects[ObjectCategory(category).value]["waypoints"], dtype=float)
    return np.stack([np.interp(ts, wp[:, 0], wp[:, 1]), np.interp(ts, wp[:, 0], wp[:, 2])], axis=1)


def _box_at(cx: float, cy: float, size, category, width, height, conf=1.0) -> BoundingBox | None:
    w, h = int(size[0]), int(size[1])
    x = min(max(round_half_up(cx - w / 2), 0), width - w)
    y = min(max(round_half_up(cy - h / 2), 0), height - h)
    return BoundingBox(x, y, w, h, category, conf)


def hcp_counts(scenario: Scenario, ts: np.ndarray) -> np.ndarray:
    """True number of providers per frame; a segment ending at the episode end includes it."""
    counts = np.zeros(len(ts), dtype=np.int64)
    for s, e, c in scenario.hcp:
        closed = e >= scenario.duration_s
        counts[(ts >= s) & ((ts < e) | (closed & (ts <= e)))] = c
    return counts


def truth_boxes(scenario: Scenario, ts: np.ndarray, rng_hands: np.random.Generator):
    """Per-frame true boxes: one per scripted object plus one per hand."""
    counts = hcp_counts(scenario, ts)
    slots = int(counts.max()) if len(counts) else 0
    phase = rng_hands.uniform(0, 2 * np.pi, size=slots)
    omega = rng_hands.uniform(0.2, 0.6, size=slots) * rng_hands.choice([-1, 1], size=slots)
    centers = {c: true_centers(scenario, c, ts) for c in SINGLE_INSTANCE
               if c.value in scenario.objects}
    nx, ny = scenario.newborn_center
    frames = []
    for i, t in enumerate(ts):
        boxes = []
        for c, pos in centers.items():
            boxes.append(_box_at(pos[i, 0], pos[i, 1], scenario.objects[c.value]["size"], c,
                                 scenario.width, scenario.height))
        for j in range(counts[i]):
            hx = nx + scenario.hand_radius * math.cos(phase[j] + omega[j] * t)
            hy = ny + 0.6 * scenario.hand_radius * math.sin(phase[j] + omega[j] * t)
            boxes.append(_box_at(hx, hy, scenario.hand_size, ObjectCategory.HCPH,
                                 scenario.width, scenario.height))
        frames.append(tuple(boxes))
    return frames, counts


def _fp_center(cx, cy, angle, dist, width, height):
    for k in range(4):
        a = angle + k * np.pi / 2
        x, y = cx + dist * math.cos(a), cy + dist * math.sin(a)
        if 0 <= x < width and 0 <= y < height:
            return x, y
    return min(max(x, 0), width - 1), min(max(y, 0), height - 1)


def _streams(seed: int):
    dropout, fp, jitter, logits, hands = np.random.SeedSequence(seed).spawn(5)
    return tuple(np.random.default_rng(s) for s in (dropout, fp, jitter, logits, hands))


def generate_window_scores(scenario: Scenario, rng: np.random.Generator | None = None,
                           fps: float = 15.0, window_frames: int = 45,
                           test_stride: int = 15) -> list[WindowScore]:
    """Logit pairs whose margin sign follows the activity at each window start."""
    if rng is None:
        rng = _streams(scenario.seed)[3]
    n = scenario.noise
    windows = make_windows(scenario.duration_s, "test", fps, window_frames,
                           test_stride=test_stride)
    seconds = math.floor(scenario.duration_s + 1e-9)
    out = []
    for activity in Activity:
        labels = rasterize(scenario.activities.get(activity.value, []), max(seconds, 1))
        regions, streams = routing_for(activity)
        for w in windows:
            k = min(int(round(w.start_s)), len(labels) - 1)
            sign = 1.0 if labels[k] else -1.0
            for region in regions:
                for stream in sorted(streams, key=lambda s: s.value):
                    d = n.logit_margin * sign + n.logit_sigma * rng.standard_normal()
                    out.append(WindowScore(activity, region, stream, w.start_s, (-d / 2, d / 2)))
    out.sort(key=lambda s: s.sort_key)
    return out


def generate_episode(scenario: Scenario) -> tuple[Episode, GroundTruthAnnotation]:
    """Noisy detections, window scores and the matching ground truth."""
    scenario.validate()
    r_drop, r_fp, r_jit, r_logit, r_hands = _streams(scenario.seed)
    noise = scenario.noise
    ts = timestamps(scenario)
    truth_frames, counts = truth_boxes(scenario, ts, r_hands)
    detections = []
    for i, (t, boxes) in enumerate(zip(ts, truth_frames)):
        drop = r_drop.random(len(boxes)) < noise.dropout
        jit = r_jit.standard_normal(len(boxes) + len(SINGLE_INSTANCE))
        fp_draw = r_fp.random((len(SINGLE_INSTANCE), 3))
        out = []
        for b, dropped, z in zip(boxes, drop, jit):
            if dropped:
                continue
            conf = float(np.clip(noise.conf_base + noise.conf_jitter * z, 0.01, 1.0))
            out.append(dataclasses.replace(b, confidence=conf))
        for c, (u, ua, ud), z in zip(SINGLE_INSTANCE, fp_draw, jit[len(boxes):]):
            if c.value not in scenario.objects or u >= noise.fp_rate:
                continue
            true_box = next(b for b in boxes if b.category is c)
            cx, cy = true_box.center
            dist = noise.fp_min_displacement + ud * (noise.fp_max_displacement - noise.fp_min_displacement)
            fx, fy = _fp_center(cx, cy, ua * 2 * np.pi, dist, scenario.width, scenario.height)
            conf = float(np.clip(noise.conf_base + noise.conf_jitter * z, 0.01, 1.0))
            out.append(_box_at(fx, fy, scenario.objects[c.value]["size"], c,
                               scenario.width, scenario.height, conf))
        detections.append(DetectionRecord(i, float(t), tuple(out)))
    truth = GroundTruthAnnotation(scenario.activities, tuple(int(c) for c in counts),
                                  tuple(truth_frames))
    scores = generate_window_scores(scenario, r_logit)
    meta = EpisodeMeta(scenario.episode_id, scenario.width, scenario.height,
                       compute_native_fps(ts), len(ts), float(ts[0]), float(ts[-1]))
    return Episode(meta, tuple(detections), tuple(scores), truth), truth


_CATEGORY_GRAY = {ObjectCategory.BMR: 200, ObjectCategory.SD: 150, ObjectCategory.HRS: 100,
                  ObjectCategory.HCPH: 240}


def generate_frames(scenario: Scenario) -> FrameSequence:
    """Flat background with solid rectangles at the true box positions."""
    ts = timestamps(scenario)
    frames_boxes, _ = truth_boxes(scenario, ts, _streams(scenario.seed)[4])
    out = np.full((len(ts), scenario.height, scenario.width), scenario.background, dtype=np.uint8)
    for frame, boxes in zip(out, frames_boxes):
        for b in boxes:
            frame[b.y:b.y + b.h, b.x:b.x + b.w] = _CATEGORY_GRAY[b.category]
    return FrameSequence(out, ts)


def ramp_video(width: int, height: int, n_frames: int, fps: float, seed: int = 0):
    """Video whose pixels change linearly in time.

    Pixel values are ``intercept + slope * (t * fps)``, integral at every
    source frame and within ``[0, 255]``.

    Returns:
        ``(frames, intercept, slope)``; evaluate ``intercept + slope * t * fps``
        for the exact value at time ``t``.
    """
    rng = np.random.default_rng(seed)
    span = max(n_frames - 1, 1)
    slope = rng.integers(-(255 // span), 255 // span + 1, size=(height, width))
    low = np.where(slope < 0, -slope * span, 0)
    high = np.where(slope > 0, 255 - slope * span, 255)
    intercept = low + (rng.random((height, width)) * (high - low + 1)).astype(np.int64)
    intercept = np.minimum(intercept, high)
    ts = np.arange(n_frames) / fps
    frames = (intercept[None] + slope[None] * np.arange(n_frames)[:, None, None]).astype(np.uint8)
    return FrameSequence(frames, ts), intercept, slope
