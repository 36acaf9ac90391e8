"""Post-processing and evaluation for object detection and activity-score streams
recorded during newborn resuscitation videos."""

from .config import Config
from .ingest import Episode, load_episode
from .model import (
    Activity,
    ActivityTimeline,
    BoundingBox,
    ConfigError,
    DetectionRecord,
    ObjectCategory,
    RegionSource,
    RegionSpec,
    Stream,
    TlfError,
    Track,
    ValidationError,
    WindowScore,
)

__version__ = "0.1.0"

__all__ = [
    "Activity", "ActivityTimeline", "BoundingBox", "Config", "ConfigError", "DetectionRecord",
    "Episode", "ObjectCategory", "RegionSource", "RegionSpec", "Stream", "TlfError", "Track",
    "ValidationError", "WindowScore", "load_episode",
]
