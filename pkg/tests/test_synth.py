import dataclasses
import json
from pathlib import Path

import numpy as np
import pytest

from tlf.config import Config
from tlf.evaluation import rasterize
from tlf.fusion import fuse_episode
from tlf.model import ObjectCategory, ValidationError
from tlf.synth import (
    Noise,
    Scenario,
    default_scenario,
    generate_episode,
    generate_frames,
    load_scenario,
    ramp_video,
    save_scenario,
    timestamps,
)
from tlf.temporal import ResampleGrid, resample_frames

ROOT = Path(__file__).resolve().parents[1]


def test_committed_scenario_is_default():
    assert load_scenario(ROOT / "scenarios" / "default.json") == default_scenario()


def test_scenario_roundtrip(tmp_path):
    s = default_scenario(90, seed=4, noise=Noise(dropout=0.1))
    save_scenario(tmp_path / "s.json", s)
    assert load_scenario(tmp_path / "s.json") == s


def test_scenario_rejects_unknown_keys(tmp_path):
    d = default_scenario().to_dict()
    d["colour"] = "red"
    p = tmp_path / "s.json"
    p.write_text(json.dumps(d))
    with pytest.raises(ValidationError, match="colour"):
        load_scenario(p)


def test_exclusive_overlap_rejected():
    s = default_scenario(60)
    s.activities = {"ventilation": [[0, 10]], "suction": [[5, 15]]}
    with pytest.raises(ValidationError):
        s.validate()


def test_timestamps_span():
    ts = timestamps(default_scenario(60))
    assert len(ts) == 901 and ts[-1] == 60.0


def test_zero_noise_detections_equal_truth(short_synthetic):
    ep, truth = short_synthetic
    for rec, boxes in zip(ep.detections, truth.boxes):
        strip = lambda bs: sorted((b.category.value, b.x, b.y, b.w, b.h) for b in bs)  # noqa: E731
        assert strip(rec.boxes) == strip(boxes)
    counts = [len(r.of(ObjectCategory.HCPH)) for r in ep.detections]
    assert counts == list(truth.hcp)


def test_dropout_pattern_reproducible():
    s = default_scenario(60, seed=9, noise=Noise(dropout=0.3))
    a, _ = generate_episode(s)
    b, _ = generate_episode(s)
    assert a.detections == b.detections
    c, _ = generate_episode(dataclasses.replace(s, seed=10))
    assert c.detections != a.detections


def test_oracle_logits_reproduce_script(short_synthetic):
    ep, truth = short_synthetic
    for activity, tl in fuse_episode(ep, Config()).items():
        assert np.array_equal(tl.binary, rasterize(truth.intervals(activity), len(tl)))


def test_static_scene_frames_identical():
    s = Scenario(duration_s=1.0, width=64, height=48,
                 objects={"BMR": {"size": [10, 8], "waypoints": [[0, 20, 20]]}},
                 hcp=[[0, 1, 0]])
    frames = generate_frames(s)
    assert len(frames) == 16
    assert all(np.array_equal(f, frames.frames[0]) for f in frames.frames)


def test_moving_rectangle_midpoint_blend():
    s = Scenario(duration_s=1.0, fps=5.0, width=64, height=48,
                 objects={"SD": {"size": [10, 10], "waypoints": [[0, 15, 20], [1, 45, 20]]}},
                 hcp=[[0, 1, 0]])
    frames = generate_frames(s)
    grid = ResampleGrid(10.0, np.array([0.1]))
    mid = resample_frames(frames, grid).frames[0]
    expected = np.floor((frames.frames[0].astype(float) + frames.frames[1]) / 2 + 0.5)
    assert np.array_equal(mid, expected)


def test_ramp_is_integral_and_in_range():
    frames, a, b = ramp_video(8, 8, 50, 10.0, seed=1)
    exact = a[None] + b[None] * np.arange(50)[:, None, None]
    assert np.array_equal(frames.frames, exact)
    assert exact.min() >= 0 and exact.max() <= 255
