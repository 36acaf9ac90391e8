"""Pipeline configuration.

The on-disk form is a flat ``key = value`` document. Per-category and
per-activity entries use dotted keys (``min_confidence.BMR``,
``threshold.ventilation``). Environment variables named ``TLF_<KEY>`` with
dots replaced by underscores override file values.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from typing import Mapping

from .model import Activity, ConfigError, ObjectCategory

POLICIES = ("available-only", "strict")
ALIGNMENTS = ("start", "center")


def _per_category(value: float) -> dict:
    return {c.value: value for c in ObjectCategory}


def _per_activity(value: float) -> dict:
    return {a.value: value for a in Activity}


@dataclass
class Config:
    min_confidence: dict = field(default_factory=lambda: _per_category(0.5))
    smoothing_window: int = 15
    max_peak_frames: int = 7
    jump_px: float = 150.0
    object_region_px: int = 500
    newborn_region_px: int = 700
    target_fps: float = 15.0
    window_frames: int = 45
    train_stride: int = 22
    test_stride: int = 15
    min_training_fps: float = 5.0
    threshold: dict = field(default_factory=lambda: _per_activity(0.5))
    kfcv_grid_step: float = 0.01
    missing_score_policy: str = "available-only"
    window_alignment: str = "start"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if set(self.min_confidence) != {c.value for c in ObjectCategory}:
            raise ConfigError("min_confidence needs one entry per object category")
        if set(self.threshold) != {a.value for a in Activity}:
            raise ConfigError("threshold needs one entry per activity")
        if self.smoothing_window < 1 or self.smoothing_window % 2 == 0:
            raise ConfigError("smoothing_window must be a positive odd integer")
        if self.max_peak_frames < 0 or self.jump_px < 0:
            raise ConfigError("peak parameters must be non-negative")
        if self.target_fps <= 0:
            raise ConfigError("target_fps must be positive")
        if min(self.window_frames, self.train_stride, self.test_stride) < 1:
            raise ConfigError("window length and strides must be positive")
        if not 0 < self.kfcv_grid_step <= 1:
            raise ConfigError("kfcv_grid_step must lie in (0, 1]")
        if self.missing_score_policy not in POLICIES:
            raise ConfigError(f"missing_score_policy must be one of {POLICIES}")
        if self.window_alignment not in ALIGNMENTS:
            raise ConfigError(f"window_alignment must be one of {ALIGNMENTS}")

    def threshold_for(self, activity: Activity) -> float:
        return self.threshold[Activity(activity).value]

    # ------------------------------------------------------------- flat form

    def to_flat(self) -> dict[str, object]:
        flat = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, dict):
                for k, v in value.items():
                    flat[f"{f.name}.{k}"] = v
            else:
                flat[f.name] = value
        return flat

    def dumps(self) -> str:
        lines = ["# tlf configuration; every key is listed with its default"]
        lines += [f"{k} = {v}" for k, v in self.to_flat().items()]
        return "\n".join(lines) + "\n"

    def updated(self, pairs: Mapping[str, str]) -> "Config":
        """Return a copy with string-valued flat keys applied."""
        types = {f.name: f.type for f in dataclasses.fields(self)}
        values = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        values = {k: dict(v) if isinstance(v, dict) else v for k, v in values.items()}
        for key, raw in pairs.items():
            name, _, sub = key.partition(".")
            if name not in types:
                raise ConfigError(f"unknown configuration key {key!r}")
            current = values[name]
            if isinstance(current, dict):
                if sub not in current:
                    raise ConfigError(f"unknown configuration key {key!r}")
                current[sub] = _coerce(float, raw, key)
            else:
                if sub:
                    raise ConfigError(f"unknown configuration key {key!r}")
                values[name] = _coerce(type(current), raw, key)
        return Config(**values)

    @classmethod
    def loads(cls, text: str) -> "Config":
        pairs = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            pairs[key] = value
        return cls().updated(pairs)

    @classmethod
    def load(cls, path=None, environ: Mapping[str, str] | None = None) -> "Config":
        """Defaults, then the file at ``path``, then ``TLF_*`` environment overrides."""
        config = cls()
        if path is not None:
            with open(path, encoding="utf-8") as fh:
                config = cls.loads(fh.read())
        environ = os.environ if environ is None else environ
        overrides = {}
        for key in config.to_flat():
            env_key = "TLF_" + key.upper().replace(".", "_")
            if env_key in environ:
                overrides[key] = environ[env_key]
        return config.updated(overrides) if overrides else config


def _coerce(kind, raw: str, key: str):
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return str(raw)
    except ValueError:
        raise ConfigError(f"invalid value {raw!r} for {key}") from None
