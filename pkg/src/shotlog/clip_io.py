"""Audio and annotation file I/O.

Everything entering the pipeline is normalized here: WAV files become
mono float buffers in [-1, 1] and annotation files become validated,
onset-sorted event lists. Levels downstream are dB re full scale, so the
16-bit scaling rule is fixed (float = int / 32768) to keep results
bit-reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.io import wavfile

from .errors import FormatError, ValidationError

SUPPORTED_SAMPLE_RATES = (16000, 44100, 48000)
EVENT_LABELS = ("gunshot", "explosion")

_PCM16_FULL_SCALE = 32768.0


@dataclass
class AudioClip:
    """Mono sample buffer plus its sample rate.

    Stereo sources are mixed down on read; ``channel_count_at_source``
    records what the file contained.
    """

    samples: np.ndarray
    sample_rate_hz: int
    channel_count_at_source: int = 1

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("AudioClip samples must be one-dimensional (mono)")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("AudioClip samples must be finite")
        if self.sample_rate_hz not in SUPPORTED_SAMPLE_RATES:
            raise ValueError(
                f"unsupported sample rate {self.sample_rate_hz}; "
                f"expected one of {SUPPORTED_SAMPLE_RATES}"
            )
        if self.channel_count_at_source < 1:
            raise ValueError("channel_count_at_source must be >= 1")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz


@dataclass
class EventAnnotation:
    """A labeled time span [onset_s, offset_s) in one recording."""

    onset_s: float
    offset_s: float
    label: str
    source_file: str = ""

    def __post_init__(self):
        if not (math.isfinite(self.onset_s) and math.isfinite(self.offset_s)):
            raise ValueError("annotation times must be finite")
        if self.onset_s < 0:
            raise ValueError(f"onset_s must be >= 0, got {self.onset_s}")
        if self.offset_s <= self.onset_s:
            raise ValueError(
                f"offset_s ({self.offset_s}) must be > onset_s ({self.onset_s})"
            )
        if self.label not in EVENT_LABELS:
            raise ValueError(f"unknown label {self.label!r}; expected one of {EVENT_LABELS}")


def mixdown(channels: np.ndarray) -> np.ndarray:
    """Average channels to mono. Linear, so mixdown(a+b) = mixdown(a)+mixdown(b)."""
    channels = np.asarray(channels, dtype=np.float64)
    if channels.ndim == 1:
        return channels
    return channels.mean(axis=1)


def read_wav(path) -> AudioClip:
    """Read a PCM16 or float32 RIFF/WAVE file as a mono AudioClip.

    16-bit data is scaled by exactly 1/32768; stereo is averaged.
    Raises FormatError for unsupported encodings and OSError/FormatError
    for unreadable or truncated files.
    """
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except (ValueError, EOFError) as exc:
        raise FormatError(f"{path}: not a readable PCM16/float32 WAV ({exc})") from exc
    if data.ndim == 2 and data.shape[1] > 2:
        raise FormatError(f"{path}: {data.shape[1]} channels; only mono/stereo supported")
    n_channels = 1 if data.ndim == 1 else data.shape[1]
    if data.dtype == np.int16:
        floats = data.astype(np.float64) / _PCM16_FULL_SCALE
    elif data.dtype == np.float32:
        floats = data.astype(np.float64)
    elif data.dtype == np.float64:
        floats = data
    else:
        raise FormatError(
            f"{path}: unsupported sample encoding {data.dtype}; "
            "expected PCM 16-bit or 32-bit float"
        )
    mono = mixdown(floats)
    return AudioClip(np.clip(mono, -1.0, 1.0), int(rate), channel_count_at_source=n_channels)


def write_wav(clip: AudioClip, path) -> None:
    """Write a clip as PCM16 WAV; values quantize by round(x*32768) with saturation."""
    scaled = np.rint(clip.samples * _PCM16_FULL_SCALE)
    pcm = np.clip(scaled, -32768, 32767).astype(np.int16)
    wavfile.write(path, clip.sample_rate_hz, pcm)


def _parse_annotation_line(obj, line_number: int) -> EventAnnotation:
    if not isinstance(obj, dict):
        raise ValidationError("expected a JSON object", line_number)
    for key in ("onset_s", "offset_s", "label"):
        if key not in obj:
            raise ValidationError(f"missing field {key!r}", line_number)
    try:
        return EventAnnotation(
            onset_s=float(obj["onset_s"]),
            offset_s=float(obj["offset_s"]),
            label=obj["label"],
            source_file=str(obj.get("source_file", "")),
        )
    except (TypeError, ValueError) as exc:
        raise ValidationError(str(exc), line_number) from exc


def read_annotations(path) -> list[EventAnnotation]:
    """Read a JSONL annotation file, returning annotations sorted by onset.

    Any malformed row raises ValidationError naming the offending line.
    """
    annotations = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"invalid JSON ({exc.msg})", line_number) from exc
            annotations.append(_parse_annotation_line(obj, line_number))
    annotations.sort(key=lambda a: a.onset_s)
    return annotations


def write_annotations(annotations, path, extra_fields: dict | None = None) -> None:
    """Write annotations as JSONL; ``extra_fields`` are merged into every row."""
    with open(path, "w", encoding="utf-8") as fh:
        for ann in annotations:
            row = {
                "onset_s": ann.onset_s,
                "offset_s": ann.offset_s,
                "label": ann.label,
            }
            if ann.source_file:
                row["source_file"] = ann.source_file
            if extra_fields:
                row.update(extra_fields)
            fh.write(json.dumps(row) + "\n")
