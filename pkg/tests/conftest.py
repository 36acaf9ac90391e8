import numpy as np
import pytest

from tlf.ingest import Episode
from tlf.model import BoundingBox, DetectionRecord, EpisodeMeta, ObjectCategory
from tlf.synth import default_scenario, generate_episode


def make_episode(frames, width=1920, height=1080, fps=15.0, episode_id="ep", scores=(), truth=None):
    """Episode from a list of per-frame box lists."""
    records = tuple(DetectionRecord(i, i / fps, tuple(boxes)) for i, boxes in enumerate(frames))
    meta = EpisodeMeta(episode_id, width, height, fps, len(records), 0.0, (len(records) - 1) / fps)
    return Episode(meta, records, tuple(scores), truth)


def box(cat, x, y, w=10, h=10, conf=0.9):
    return BoundingBox(x, y, w, h, ObjectCategory(cat), conf)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def short_synthetic():
    return generate_episode(default_scenario(60.0, seed=7))
