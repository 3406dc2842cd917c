"""Window classifiers: logistic regression and random forest on the five
level features, and a small CNN on 27x8 spectrogram patches. All training
and inference numerics live in this package; models serialize to a
versioned JSON container that reproduces predictions bit-exactly."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import FormatError
from .convnet import ConvNetModel, train_convnet
from .forest import ForestModel, train_forest
from .logistic import LogisticModel, train_logistic

MODEL_KINDS = ("logistic", "forest", "cnn")

CONTAINER_FORMAT_VERSION = 1


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 200
    batch_size: int = 64
    l2: float = 1e-4
    class_weight: float | None = None  # None: negatives/positives on the train split
    momentum: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("learning rate, epochs and batch size must be positive")
        if self.l2 < 0 or not (0 <= self.momentum < 1):
            raise ValueError("l2 must be >= 0 and momentum in [0, 1)")
        if self.class_weight is not None and self.class_weight <= 0:
            raise ValueError("class_weight must be positive")


_MODEL_CLASSES = {
    "logistic": LogisticModel,
    "forest": ForestModel,
    "cnn": ConvNetModel,
}

_TRAINERS = {
    "logistic": train_logistic,
    "forest": train_forest,
    "cnn": train_convnet,
}


def kind_of(model) -> str:
    for kind, cls in _MODEL_CLASSES.items():
        if isinstance(model, cls):
            return kind
    raise TypeError(f"unknown model type {type(model)!r}")


def train_model(kind: str, inputs, labels, config: TrainConfig):
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    return _TRAINERS[kind](inputs, labels, config)


def predict_proba(model, inputs) -> np.ndarray:
    """Event probability per window for any of the three model kinds."""
    return model.predict_proba(inputs)


def save_model(model, path, train_config: TrainConfig | None = None,
               threshold: float | None = None) -> None:
    container = {
        "format_version": CONTAINER_FORMAT_VERSION,
        "kind": kind_of(model),
        "train_config": asdict(train_config) if train_config else None,
        "threshold": threshold,
        "params": model.to_dict(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(container, fh)


def load_model(path):
    """Load a model container; returns (model, train_config, threshold)."""
    with open(path, "r", encoding="utf-8") as fh:
        container = json.load(fh)
    version = container.get("format_version")
    if version != CONTAINER_FORMAT_VERSION:
        raise FormatError(f"unsupported model container version {version!r}")
    kind = container.get("kind")
    if kind not in _MODEL_CLASSES:
        raise FormatError(f"unknown model kind {kind!r} in container")
    model = _MODEL_CLASSES[kind].from_dict(container["params"])
    config = TrainConfig(**container["train_config"]) if container.get("train_config") else None
    return model, config, container.get("threshold")


def split_by_scene(n_scenes: int, seed: int, fractions=(0.7, 0.15, 0.15)):
    """Shuffle scene indices and cut into train/validation/test groups.

    Windows of one scene never straddle a split boundary because the split
    happens at scene granularity.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("split fractions must sum to 1")
    order = np.random.default_rng(seed).permutation(n_scenes)
    n_train = int(round(fractions[0] * n_scenes))
    n_val = int(round(fractions[1] * n_scenes))
    return (
        np.sort(order[:n_train]),
        np.sort(order[n_train : n_train + n_val]),
        np.sort(order[n_train + n_val :]),
    )
