"""Feature-sequence and annotation ingestion, windowing, coordinate maps.

Feature files are a small custom binary format::

    magic "BMNF" | version u32 LE = 1 | C u32 LE | T u32 LE
    | C*T float32 LE, channel-major

Annotations are a JSON object mapping video id to
``{"duration_second": float, "annotations": [{"segment": [s, e],
"label": str}]}``; labels are ignored. Annotations are stored in seconds
everywhere; window-local snippet coordinates are derived views.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    DataError,
    DegenerateInputError,
    FormatError,
    LookupError_,
    ParameterError,
    TruncationError,
    ValidationError,
)

FEATURE_MAGIC = b"BMNF"
FEATURE_VERSION = 1
_HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True)
class FeatureSequence:
    """A (C, T) float32 matrix of per-snippet features plus time metadata.

    ``frame_interval`` is the number of video frames each snippet covers;
    it only matters for the windowed second-coordinate mapping.
    """

    video_id: str
    data: np.ndarray
    duration_seconds: float
    frame_interval: int = 1

    def __post_init__(self):
        if self.data.ndim != 2:
            raise DataError("feature data must be a (C, T) matrix")
        if not np.all(np.isfinite(self.data)):
            raise DataError(f"{self.video_id}: non-finite feature values")
        if self.length > 0 and not self.duration_seconds > 0:
            raise ValidationError(
                f"{self.video_id}: duration_seconds must be positive"
            )

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def length(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class VideoAnnotations:
    duration_seconds: float
    instances: tuple[tuple[float, float], ...]


class AnnotationSet:
    """Per-video ground-truth instances, all in seconds."""

    def __init__(self, videos: dict[str, VideoAnnotations]):
        self._videos = dict(videos)

    def get(self, video_id: str) -> VideoAnnotations:
        try:
            return self._videos[video_id]
        except KeyError:
            raise LookupError_(f"no annotations for video {video_id!r}") from None

    def __contains__(self, video_id: str) -> bool:
        return video_id in self._videos

    def __iter__(self):
        return iter(self._videos)

    def __len__(self) -> int:
        return len(self._videos)

    def items(self):
        return self._videos.items()


@dataclass(frozen=True)
class Window:
    """A fixed-length slice of a feature sequence.

    ``instances`` are window-local: snippet units relative to ``start``,
    clipped to ``[0, length]``.
    """

    video_id: str
    start: int
    end: int
    features: np.ndarray
    instances: tuple[tuple[float, float], ...] = ()

    @property
    def length(self) -> int:
        return self.end - self.start


def write_features(path, data, video_id: str | None = None) -> None:
    """Write a (C, T) array in the binary feature format."""
    arr = np.ascontiguousarray(data, dtype="<f4")
    if arr.ndim != 2:
        raise DataError("feature data must be a (C, T) matrix")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, *arr.shape))
        fh.write(arr.tobytes())


def load_features(
    path,
    duration_seconds: float | None = None,
    frame_interval: int = 1,
) -> FeatureSequence:
    """Load a feature file; the video id is the file stem.

    ``duration_seconds`` defaults to T (one snippet per second) and is
    normally overridden from the annotation file by the pipeline.
    """
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size or raw[:4] != FEATURE_MAGIC:
        raise FormatError(f"{path}: missing feature-file magic")
    magic, version, channels, length = _HEADER.unpack_from(raw)
    if version != FEATURE_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    payload = raw[_HEADER.size:]
    expected = 4 * channels * length
    if len(payload) != expected:
        raise TruncationError(
            f"{path}: header declares {expected} payload bytes, "
            f"found {len(payload)}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(channels, length)
    if not np.all(np.isfinite(data)):
        raise DataError(f"{path}: non-finite feature values")
    if duration_seconds is None:
        duration_seconds = float(length)
    return FeatureSequence(
        video_id=Path(path).stem,
        data=data.astype(np.float32),
        duration_seconds=duration_seconds,
        frame_interval=frame_interval,
    )


def load_annotations(path) -> AnnotationSet:
    """Load and validate the annotation JSON file."""
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: top level must be an object")
    videos = {}
    for video_id, rec in doc.items():
        try:
            duration = float(rec["duration_second"])
            entries = rec["annotations"]
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"{path}: bad record for {video_id!r}") from exc
        instances = []
        for entry in entries:
            s, e = (float(v) for v in entry["segment"])
            if not (0.0 <= s < e <= duration):
                raise ValidationError(
                    f"{video_id}: segment [{s}, {e}] violates "
                    f"0 <= start < end <= {duration}"
                )
            instances.append((s, e))
        videos[video_id] = VideoAnnotations(duration, tuple(instances))
    return AnnotationSet(videos)


def save_annotations(path, videos: dict[str, VideoAnnotations]) -> None:
    doc = {
        vid: {
            "duration_second": ann.duration_seconds,
            "annotations": [
                {"segment": [s, e], "label": "action"} for s, e in ann.instances
            ],
        }
        for vid, ann in videos.items()
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)


def seconds_to_index(f: FeatureSequence, t: float, fps: float | None = None) -> float:
    """Map a time in seconds onto the snippet-index axis of ``f``.

    Without ``fps`` the sequence is assumed to span its duration uniformly
    (the rescaled-sequence convention); with ``fps`` the index reflects the
    frame-interval sampling of the original video.
    """
    if fps is None:
        return t / f.duration_seconds * f.length
    return t * fps / f.frame_interval


def index_to_seconds(
    idx: float,
    window_start: int,
    window_len: int,
    f: FeatureSequence,
    rescaled: bool,
    fps: float | None = None,
) -> float:
    """Inverse of :func:`seconds_to_index` for a window-local index."""
    if rescaled:
        return idx / window_len * f.duration_seconds
    if fps is None:
        raise ConfigError("windowed second mapping requires fps")
    return (idx + window_start) * f.frame_interval / fps


def rescale_features(f: FeatureSequence, target_len: int) -> FeatureSequence:
    """Linearly resample each channel onto ``target_len`` positions.

    Sample positions span [0, T-1] uniformly, so ``target_len == T`` is the
    identity and per-channel min/max bounds are preserved.
    """
    if f.length == 0:
        raise DegenerateInputError("cannot rescale an empty sequence")
    if target_len < 2:
        raise ParameterError("target_len must be >= 2")
    if target_len == f.length:
        return f
    pos = np.linspace(0.0, f.length - 1, target_len)
    base = np.arange(f.length, dtype=np.float64)
    out = np.empty((f.channels, target_len), dtype=np.float32)
    for c in range(f.channels):
        out[c] = np.interp(pos, base, f.data[c].astype(np.float64))
    return replace(f, data=out)


def make_windows(
    f: FeatureSequence,
    annotations: AnnotationSet | None,
    window_len: int,
    training: bool,
    fps: float | None = None,
    min_keep: float = 0.5,
) -> list[Window]:
    """Slice a sequence into 50%-overlap windows of ``window_len`` snippets.

    The final window is shifted left to end exactly at T when it would
    overrun; sequences shorter than ``window_len`` yield no windows. With
    ``training=True`` only windows that retain at least one instance are
    kept: instances are clipped to the window and survive when the clipped
    part covers at least ``min_keep`` of the original duration.
    """
    if window_len < 2:
        raise ParameterError("window_len must be >= 2")
    total = f.length
    if total < window_len:
        return []
    stride = window_len // 2
    starts = list(range(0, total - window_len + 1, stride))
    if starts[-1] + window_len < total:
        starts.append(total - window_len)

    instances_idx: list[tuple[float, float]] = []
    if annotations is not None:
        ann = annotations.get(f.video_id)
        instances_idx = [
            (seconds_to_index(f, s, fps), seconds_to_index(f, e, fps))
            for s, e in ann.instances
        ]

    windows = []
    for start in starts:
        end = start + window_len
        kept: list[tuple[float, float]] = []
        for s, e in instances_idx:
            cs = max(s, float(start)) - start
            ce = min(e, float(end)) - start
            if ce <= cs:
                continue
            if training and (ce - cs) / (e - s) < min_keep:
                continue
            kept.append((cs, ce))
        if training and not kept:
            continue
        windows.append(
            Window(
                video_id=f.video_id,
                start=start,
                end=end,
                features=np.ascontiguousarray(f.data[:, start:end]),
                instances=tuple(kept),
            )
        )
    return windows


def to_seconds(proposal, window: Window, f: FeatureSequence, rescaled: bool,
               fps: float | None = None):
    """Convert a window-coordinate proposal to second coordinates."""
    import dataclasses

    return dataclasses.replace(
        proposal,
        t_start=index_to_seconds(
            proposal.t_start, window.start, window.length, f, rescaled, fps
        ),
        t_end=index_to_seconds(
            proposal.t_end, window.start, window.length, f, rescaled, fps
        ),
    )
