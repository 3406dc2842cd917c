"""Pipeline configuration: a TOML file with sections mirroring the CLI
subcommands, plus flag overrides (flags win)."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigurationError


@dataclass
class SynthSection:
    n_scenes: int = 500
    duration_s: float = 20.0
    sample_rate_hz: int = 16000
    gunshot_rate_per_hour: float = 1587.0
    explosion_rate_per_hour: float = 98.0
    snr_db_lo: float = 0.0
    snr_db_hi: float = 20.0
    base_timestamp: str = "2025-01-06T09:00:00"
    background_dir: str = ""
    gunshot_dir: str = ""
    explosion_dir: str = ""


@dataclass
class TrainSection:
    kind: str = "cnn"
    learning_rate: float = 0.01
    epochs: int = 10
    batch_size: int = 64
    l2: float = 1e-4
    momentum: float = 0.9
    class_weight: float = 0.0  # 0: auto negatives/positives
    label_mode: str = "overlap"


@dataclass
class EvalSection:
    collar_s: float = 0.5
    min_gap_s: float = 0.25


@dataclass
class DetectSection:
    threshold: float = 0.0  # 0: use the threshold stored in the model
    min_gap_s: float = 0.25
    session_gap_s: float = 600.0
    insertion_rate: float = -1.0  # <0: no count correction in the logbook
    deletion_rate: float = -1.0


@dataclass
class PipelineConfig:
    seed: int = 0
    timezone: str = "Europe/Oslo"
    out_dir: str = "runs/out"
    synth: SynthSection = field(default_factory=SynthSection)
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalSection = field(default_factory=EvalSection)
    detect: DetectSection = field(default_factory=DetectSection)


_SECTIONS = {"synth": SynthSection, "train": TrainSection, "eval": EvalSection,
             "detect": DetectSection}


def _build_section(cls, data: dict, name: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigurationError(f"unknown keys in [{name}]: {sorted(unknown)}")
    return cls(**data)


def load_config(path) -> PipelineConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}")
    config = PipelineConfig()
    top_known = {"seed", "timezone", "out_dir"}
    for key, value in raw.items():
        if key in top_known:
            setattr(config, key, value)
        elif key in _SECTIONS:
            setattr(config, key, _build_section(_SECTIONS[key], value, key))
        else:
            raise ConfigurationError(f"unknown config key {key!r}")
    return config


def apply_overrides(config: PipelineConfig, overrides: dict) -> PipelineConfig:
    """Apply flag values onto the config; None values mean 'not given'."""
    for dotted, value in overrides.items():
        if value is None:
            continue
        if "." in dotted:
            section_name, key = dotted.split(".", 1)
            section = getattr(config, section_name)
            if not hasattr(section, key):
                raise ConfigurationError(f"unknown config field {dotted}")
            setattr(section, key, value)
        else:
            if not hasattr(config, dotted):
                raise ConfigurationError(f"unknown config field {dotted}")
            setattr(config, dotted, value)
    return config
