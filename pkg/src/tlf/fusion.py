"""Window-score fusion into per-activity timelines, and HCP counting.

Per window: appearance and flow logits are averaged, a two-way softmax
gives the activity probability for each region, and region probabilities
are averaged. Window probabilities are laid on a one-second grid and
thresholded.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .config import Config
from .model import (
    Activity,
    ActivityTimeline,
    HcpTimeline,
    MissingScoreError,
    ObjectCategory,
    RegionSource,
    Stream,
    ValidationError,
    WindowScore,
    routing_for,
)

logger = logging.getLogger(__name__)

AVAILABLE_ONLY = "available-only"
STRICT = "strict"


def softmax2(logits: Sequence[float]) -> tuple[float, float]:
    """Two-way softmax ``(p_no_activity, p_activity)``, stable for large logits."""
    l0, l1 = (float(v) for v in logits)
    if not (math.isfinite(l0) and math.isfinite(l1)):
        raise ValidationError(f"non-finite logits {logits!r}")
    d = l1 - l0
    if d >= 0:
        p1 = 1.0 / (1.0 + math.exp(-d))
    else:
        e = math.exp(d)
        p1 = e / (1.0 + e)
    return 1.0 - p1, p1


@dataclass(frozen=True)
class FusedWindowProb:
    activity: Activity
    window_start_s: float
    prob_activity: float
    regions: tuple[RegionSource, ...]
    streams: tuple[Stream, ...]


def _check_policy(policy: str) -> None:
    if policy not in (AVAILABLE_ONLY, STRICT):
        raise ValidationError(f"unknown missing-score policy {policy!r}")


def fuse_streams(scores: Sequence[WindowScore], policy: str = AVAILABLE_ONLY) -> float:
    """Average the logit pairs of one (activity, region, window), then softmax."""
    _check_policy(policy)
    if not scores:
        raise MissingScoreError("no scores to fuse")
    keys = {(s.activity, s.region_source, s.window_start_s) for s in scores}
    if len(keys) != 1:
        raise ValidationError("fuse_streams needs scores of a single activity, region and window")
    streams = [s.stream for s in scores]
    if len(set(streams)) != len(streams):
        raise ValidationError("duplicate stream scores for one window")
    activity = scores[0].activity
    required = routing_for(activity)[1]
    if policy == STRICT and set(streams) != required:
        missing = sorted(s.value for s in required - set(streams))
        raise MissingScoreError(f"{activity.value}: missing stream(s) {missing}")
    l0 = sum(s.logits[0] for s in scores) / len(scores)
    l1 = sum(s.logits[1] for s in scores) / len(scores)
    return softmax2((l0, l1))[1]


def fuse_regions(region_probs: Mapping[RegionSource, float], activity: Activity,
                 window_start_s: float = 0.0, policy: str = AVAILABLE_ONLY,
                 streams: Iterable[Stream] = ()) -> FusedWindowProb:
    """Arithmetic mean over the region probabilities that are present."""
    _check_policy(policy)
    activity = Activity(activity)
    required = routing_for(activity)[0]
    present = [r for r in required if r in region_probs]
    if not present:
        raise MissingScoreError(f"{activity.value}: no region probability at {window_start_s} s")
    if policy == STRICT and len(present) != len(required):
        raise MissingScoreError(f"{activity.value}: missing region(s) at {window_start_s} s")
    prob = sum(region_probs[r] for r in present) / len(present)
    return FusedWindowProb(activity, window_start_s, prob, tuple(present),
                           tuple(sorted(set(streams), key=list(Stream).index)))


def fuse_activity(scores: Iterable[WindowScore], activity: Activity,
                  policy: str = AVAILABLE_ONLY) -> list[FusedWindowProb]:
    """Fused probability for every window of ``activity`` that has scores."""
    activity = Activity(activity)
    by_window: dict[float, dict[RegionSource, list[WindowScore]]] = defaultdict(lambda: defaultdict(list))
    for s in scores:
        if s.activity is activity:
            by_window[s.window_start_s][s.region_source].append(s)
    out = []
    for start in sorted(by_window):
        regions = by_window[start]
        probs, streams = {}, set()
        for region, group in regions.items():
            probs[region] = fuse_streams(group, policy)
            streams.update(s.stream for s in group)
        try:
            out.append(fuse_regions(probs, activity, start, policy, streams))
        except MissingScoreError:
            if policy == STRICT:
                raise
    return out


def assemble_timeline(fused: Sequence[FusedWindowProb], duration_s: float, threshold: float = 0.5,
                      activity: Activity | None = None, alignment: str = "start",
                      window_s: float = 3.0, period_s: float = 1.0) -> ActivityTimeline:
    """Lay window probabilities on the per-second grid and threshold them.

    With ``start`` alignment second ``k`` takes the window starting at ``k``;
    ``center`` uses the second holding the window's midpoint. Seconds without
    a window inherit the previous value (leading ones take the first).
    ``binary`` is 1 where the probability is strictly above ``threshold``.
    """
    if activity is None:
        if not fused:
            raise ValidationError("activity required for an empty timeline")
        activity = fused[0].activity
    n = max(math.floor(duration_s / period_s + 1e-9), 0)
    probs = np.full(n, np.nan)
    offset = 0.0 if alignment == "start" else window_s / 2
    for f in fused:
        k = math.floor((f.window_start_s + offset) / period_s + 1e-9)
        if 0 <= k < n:
            probs[k] = f.prob_activity
    have = ~np.isnan(probs)
    if n and not have.any():
        logger.warning("%s: no window probabilities; timeline is all zero", Activity(activity).value)
        probs[:] = 0.0
    elif n:
        idx = np.where(have, np.arange(n), -1)
        idx = np.maximum.accumulate(idx)
        idx[idx < 0] = np.argmax(have)
        probs = probs[idx]
    binary = (probs > threshold).astype(np.int8)
    return ActivityTimeline(Activity(activity), probs, binary, threshold, period_s)


def fuse_episode(episode, config: Config | None = None) -> dict[Activity, ActivityTimeline]:
    """Timelines for every activity that has at least one window score."""
    config = config or Config()
    window_s = config.window_frames / config.target_fps
    period = config.test_stride / config.target_fps
    out = {}
    for activity in Activity:
        fused = fuse_activity(episode.scores, activity, config.missing_score_policy)
        if not fused:
            continue
        out[activity] = assemble_timeline(
            fused, episode.meta.duration_s, config.threshold_for(activity), activity,
            config.window_alignment, window_s, period)
    return out


def estimate_hcp(episode) -> HcpTimeline:
    """Number of hand boxes per frame; duplicates are counted as they come."""
    records = episode.detections if hasattr(episode, "detections") else episode
    return HcpTimeline([len(r.of(ObjectCategory.HCPH)) for r in records])
