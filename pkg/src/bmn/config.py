"""Run configuration: JSON file + dataset profiles + CLI overrides.

A config file is a JSON object whose sections mirror the dataclasses below.
The ``profile`` key applies a named preset first; explicit file values then
override it. All randomness flows from the single ``train.seed``.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .model import Architecture


def _grid(lo: float, hi: float, step: float) -> list[float]:
    out = []
    v = lo
    while v <= hi + 1e-9:
        out.append(round(v, 10))
        v += step
    return out


@dataclass
class PathsConfig:
    features_dir: str = ""
    annotations: str = ""
    out_dir: str = "out"
    checkpoint: str = ""


@dataclass
class ModelConfig:
    input_dim: int = 16
    window_len: int = 100
    max_duration: int = 100
    num_samples: int = 32
    expand: float = 0.25
    frame_interval: int = 1  # snippets cover this many frames (windowed mode)
    base_channels: list[int] = field(default_factory=lambda: [256, 128])
    tem_hidden: int = 256
    reduce_dim: int = 512
    pem_hidden: int = 128

    def architecture(self) -> Architecture:
        return Architecture(
            input_dim=self.input_dim,
            window_len=self.window_len,
            max_duration=self.max_duration,
            num_samples=self.num_samples,
            base_channels=tuple(self.base_channels),
            tem_hidden=self.tem_hidden,
            reduce_dim=self.reduce_dim,
            pem_hidden=self.pem_hidden,
        )


@dataclass
class TrainSection:
    learning_rate: float = 0.001
    batch_size: int = 16
    epochs: int = 10
    reg_weight: float = 10.0
    pem_weight: float = 1.0
    l2_weight: float = 0.0001
    pos_threshold: float = 0.5
    seed: int = 7
    dtype: str = "float32"


@dataclass
class DecodeSection:
    nms: str = "soft"
    decay: float = 0.4
    score_floor: float = 0.001
    top_k: int = 100
    iou_threshold: float = 0.65


@dataclass
class EvalSection:
    thresholds: list[float] = field(default_factory=lambda: _grid(0.5, 0.95, 0.05))
    an_max: int = 100


@dataclass
class SynthSection:
    train_videos: int = 200
    val_videos: int = 50
    feature_dim: int = 16
    length: int = 100
    amplitude: float = 1.0
    noise_std: float = 0.3


@dataclass
class RunConfig:
    profile: str = "anet"
    mode: str = "rescale"  # or "windowed"
    fps: float | None = None
    threads: int | None = None
    paths: PathsConfig = field(default_factory=PathsConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainSection = field(default_factory=TrainSection)
    decode: DecodeSection = field(default_factory=DecodeSection)
    eval: EvalSection = field(default_factory=EvalSection)
    synthetic: SynthSection = field(default_factory=SynthSection)

    def validate(self) -> "RunConfig":
        m = self.model
        if m.max_duration > m.window_len:
            raise ConfigError("max_duration cannot exceed window_len")
        if m.num_samples < 2:
            raise ConfigError("num_samples must be >= 2")
        if m.window_len < 2:
            raise ConfigError("window_len must be >= 2")
        for name in ("learning_rate", "batch_size", "epochs"):
            if getattr(self.train, name) <= 0 and name != "learning_rate":
                raise ConfigError(f"train.{name} must be positive")
        if self.train.learning_rate < 0:
            raise ConfigError("train.learning_rate must be nonnegative")
        if self.mode not in ("rescale", "windowed"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.mode == "windowed" and self.fps is None:
            raise ConfigError("windowed mode requires fps")
        if self.decode.nms not in ("soft", "greedy"):
            raise ConfigError(f"unknown nms kind {self.decode.nms!r}")
        if self.train.dtype not in ("float32", "float64"):
            raise ConfigError(f"unsupported dtype {self.train.dtype!r}")
        return self


PROFILES: dict[str, dict] = {
    # Long-video profile: fixed-length windows over the raw sequence.
    "thumos": {
        "mode": "windowed",
        "fps": 25.0,
        "model": {"window_len": 128, "max_duration": 64, "frame_interval": 5},
        "eval": {"thresholds": _grid(0.5, 1.0, 0.05)},
    },
    # Whole-video profile: every sequence rescaled to one window.
    "anet": {
        "mode": "rescale",
        "model": {"window_len": 100, "max_duration": 100},
        "eval": {"thresholds": _grid(0.5, 0.95, 0.05)},
    },
    # Scaled-down profile for tests and gradient checks.
    "tiny": {
        "mode": "rescale",
        "model": {
            "input_dim": 4, "window_len": 16, "max_duration": 8,
            "num_samples": 4, "base_channels": [8, 4], "tem_hidden": 8,
            "reduce_dim": 16, "pem_hidden": 8,
        },
        "synthetic": {"feature_dim": 4, "length": 16, "train_videos": 8,
                      "val_videos": 4},
    },
}


def _merge_section(obj, values: dict, context: str):
    names = {f.name for f in dataclasses.fields(obj)}
    for key, value in values.items():
        if key not in names:
            raise ConfigError(f"unknown config key {context}.{key}")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current) and isinstance(value, dict):
            _merge_section(current, value, f"{context}.{key}")
        else:
            setattr(obj, key, value)


def make_config(data: dict | None = None, profile: str | None = None) -> RunConfig:
    """Build a config from defaults, an optional profile, and overrides."""
    cfg = RunConfig()
    data = dict(data or {})
    name = profile or data.get("profile", cfg.profile)
    if name not in PROFILES:
        raise ConfigError(
            f"unknown profile {name!r} (have {sorted(PROFILES)})"
        )
    cfg.profile = name
    _merge_section(cfg, PROFILES[name], "profile")
    data.pop("profile", None)
    _merge_section(cfg, data, "config")
    return cfg.validate()


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return make_config(data)


def default_config_json() -> str:
    """The fully-resolved default config, for ``--dump-config``."""
    cfg = make_config()
    return json.dumps(dataclasses.asdict(cfg), indent=2, sort_keys=True)
