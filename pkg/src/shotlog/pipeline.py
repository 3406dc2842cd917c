"""Dataset assembly and orchestration shared by the CLI commands.

A synthesized corpus is a directory of scene WAVs and annotation JSONL
files plus one manifest CSV carrying per-scene seeds, event counts and
the wall-clock start timestamp of every file. Training and evaluation
assemble aligned window datasets (five level features, 27x8 spectrogram
patches, binary targets) from the manifest, split by scene.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .clip_io import AudioClip, read_annotations, read_wav, write_annotations, write_wav
from .errors import ConfigurationError
from .eval_metrics import (
    EventScore,
    WindowScores,
    average_precision,
    det_curve,
    event_metrics,
    window_f1,
)
from .features import features_for_series
from .indicators import HOP_S, level_series, third_octave_spectrogram
from .labeling import annotations_to_window_labels
from .models import TrainConfig, predict_proba, split_by_scene, train_model
from .scene_synth import SceneSpec, build_proxy_pools, synthesize
from .detector import correct_event_onsets, decode_events

MANIFEST_NAME = "manifest.csv"
MANIFEST_COLUMNS = (
    "scene_id",
    "wav",
    "annotations",
    "seed",
    "start_timestamp",
    "n_gunshots",
    "n_explosions",
    "normalization_factor",
)


def atomic_write_text(path, text: str) -> None:
    """Write via a temp file in the same directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class SceneRecord:
    scene_id: str
    wav: str
    annotations: str
    seed: int
    start_timestamp: str
    n_gunshots: int
    n_explosions: int
    normalization_factor: float


def write_manifest(records: list[SceneRecord], path) -> None:
    import io

    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(MANIFEST_COLUMNS)
    for r in records:
        writer.writerow(
            [
                r.scene_id,
                r.wav,
                r.annotations,
                r.seed,
                r.start_timestamp,
                r.n_gunshots,
                r.n_explosions,
                repr(r.normalization_factor),
            ]
        )
    atomic_write_text(path, buffer.getvalue())


def read_manifest(path) -> list[SceneRecord]:
    records = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(MANIFEST_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ConfigurationError(f"manifest {path} lacks columns {sorted(missing)}")
        for row in reader:
            records.append(
                SceneRecord(
                    scene_id=row["scene_id"],
                    wav=row["wav"],
                    annotations=row["annotations"],
                    seed=int(row["seed"]),
                    start_timestamp=row["start_timestamp"],
                    n_gunshots=int(row["n_gunshots"]),
                    n_explosions=int(row["n_explosions"]),
                    normalization_factor=float(row["normalization_factor"]),
                )
            )
    return records


@dataclass
class SynthSettings:
    n_scenes: int = 500
    duration_s: float = 20.0
    sample_rate_hz: int = 16000
    gunshot_rate_per_hour: float = 1587.0
    explosion_rate_per_hour: float = 98.0
    snr_db_range: tuple[float, float] = (0.0, 20.0)
    base_timestamp: str = "2025-01-06T09:00:00"
    pool_seed_offset: int = 1_000_003  # decouples pool material from scene seeds


def synthesize_corpus(out_dir, seed: int, settings: SynthSettings,
                      pools=None) -> list[SceneRecord]:
    """Write a corpus of scenes plus its manifest; deterministic in seed."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if pools is None:
        pools = build_proxy_pools(
            seed + settings.pool_seed_offset,
            settings.sample_rate_hz,
            background_duration_s=settings.duration_s,
        )
    backgrounds, gunshots, explosions = pools
    scene_seeds = [
        int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(settings.n_scenes)
    ]
    base_time = datetime.fromisoformat(settings.base_timestamp)
    records = []
    for i, scene_seed in enumerate(scene_seeds):
        spec = SceneSpec(
            seed=scene_seed,
            background_pool=backgrounds,
            gunshot_pool=gunshots,
            explosion_pool=explosions,
            duration_s=settings.duration_s,
            gunshot_rate_per_hour=settings.gunshot_rate_per_hour,
            explosion_rate_per_hour=settings.explosion_rate_per_hour,
            snr_db_range=settings.snr_db_range,
        )
        scene = synthesize(spec)
        scene_id = f"scene_{i:05d}"
        wav_name = f"{scene_id}.wav"
        ann_name = f"{scene_id}.jsonl"
        write_wav(scene.mixture, out_dir / wav_name)
        write_annotations(scene.annotations, out_dir / ann_name)
        start = base_time + timedelta(seconds=i * settings.duration_s)
        records.append(
            SceneRecord(
                scene_id=scene_id,
                wav=wav_name,
                annotations=ann_name,
                seed=scene_seed,
                start_timestamp=start.isoformat(),
                n_gunshots=sum(1 for a in scene.annotations if a.label == "gunshot"),
                n_explosions=sum(1 for a in scene.annotations if a.label == "explosion"),
                normalization_factor=scene.normalization_factor,
            )
        )
    write_manifest(records, out_dir / MANIFEST_NAME)
    return records


@dataclass
class SceneWindows:
    scene_id: str
    features: np.ndarray  # [n_windows x 5]
    patches: np.ndarray  # [n_windows x 27 x 8]
    labels: np.ndarray  # [n_windows] bool
    annotations: list
    n_level_samples: int


def scene_windows(clip: AudioClip, annotations, scene_id="", label_mode="overlap") -> SceneWindows:
    """Aligned per-window features, spectrogram patches and labels."""
    series = level_series(clip)
    spec = third_octave_spectrogram(clip)
    features = features_for_series(series)
    grid_duration = len(series) * HOP_S
    labeling = annotations_to_window_labels(annotations, grid_duration, mode=label_mode)
    if len(labeling.labels) != len(features):
        raise ConfigurationError(
            f"{scene_id}: {len(features)} feature windows vs {len(labeling.labels)} labels"
        )
    # windowed axis lands last: [n_windows x 27 bands x 8 frames]
    patches = np.lib.stride_tricks.sliding_window_view(spec.frames, 8, axis=0)
    patches = np.ascontiguousarray(patches)
    return SceneWindows(
        scene_id=scene_id,
        features=features,
        patches=patches,
        labels=labeling.labels,
        annotations=list(annotations),
        n_level_samples=len(series),
    )


def load_corpus_windows(manifest_path, label_mode="overlap") -> list[SceneWindows]:
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    scenes = []
    for record in read_manifest(manifest_path):
        clip = read_wav(base / record.wav)
        annotations = read_annotations(base / record.annotations)
        scenes.append(scene_windows(clip, annotations, record.scene_id, label_mode))
    return scenes


def assemble(scenes: list[SceneWindows], indices) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Concatenate features/patches/labels of the selected scenes."""
    selected = [scenes[i] for i in indices]
    X = np.concatenate([s.features for s in selected])
    patches = np.concatenate([s.patches for s in selected])
    y = np.concatenate([s.labels for s in selected])
    return X, patches, y


THRESHOLD_MARGIN = 1e-6  # decode_events needs a threshold strictly inside (0, 1)


def select_threshold(probabilities, labels) -> float:
    """Threshold (inclusive >=) maximizing window F1 over the representable
    operating points in (0, 1); deterministic."""
    probabilities = np.asarray(probabilities, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    n_pos = int(labels.sum())
    if n_pos == 0:
        return 0.5
    order = np.argsort(-probabilities, kind="stable")
    sorted_probs = probabilities[order]
    tp = np.cumsum(labels[order])
    ranks = np.arange(1, len(order) + 1)
    precision = tp / ranks
    recall = tp / n_pos
    with np.errstate(invalid="ignore", divide="ignore"):
        f1 = np.where(precision + recall > 0, 2 * precision * recall / (precision + recall), 0.0)
    # a threshold includes all samples tied with it, so only rank positions
    # at the end of a tie group are feasible operating points; thresholds
    # outside (0, 1) cannot be used for event decoding
    feasible = np.ones(len(order), dtype=bool)
    feasible[:-1] = sorted_probs[:-1] > sorted_probs[1:]
    feasible &= (sorted_probs >= THRESHOLD_MARGIN) & (sorted_probs <= 1.0 - THRESHOLD_MARGIN)
    if not feasible.any():
        return 0.5
    f1 = np.where(feasible, f1, -1.0)
    best = int(np.argmax(f1))
    return float(sorted_probs[best])


def model_inputs(kind: str, features: np.ndarray, patches: np.ndarray):
    return patches if kind == "cnn" else features


@dataclass
class TrainResult:
    model: object
    kind: str
    threshold: float
    validation_f1: float | None
    validation_ap: float | None


def train_pipeline(scenes, kind: str, config: TrainConfig, split_seed: int) -> TrainResult:
    """Train on the scene-level train split, pick the threshold on the
    validation split."""
    train_idx, val_idx, _ = split_by_scene(len(scenes), split_seed)
    X_train, patches_train, y_train = assemble(scenes, train_idx)
    X_val, patches_val, y_val = assemble(scenes, val_idx)
    model = train_model(kind, model_inputs(kind, X_train, patches_train), y_train, config)
    val_probs = predict_proba(model, model_inputs(kind, X_val, patches_val))
    threshold = select_threshold(val_probs, y_val)
    scores = WindowScores(probabilities=val_probs, labels=y_val)
    result = window_f1(scores, threshold)
    return TrainResult(
        model=model,
        kind=kind,
        threshold=threshold,
        validation_f1=result.f1,
        validation_ap=average_precision(scores),
    )


@dataclass
class EvalResult:
    kind: str
    threshold: float
    window: dict
    event: EventScore
    curve: object


def evaluate_pipeline(scenes, model, kind: str, threshold: float, split_seed: int,
                      collar_s: float, min_gap_s: float = 0.25) -> EvalResult:
    """Window and event metrics of one model on the scene-level test split."""
    _, _, test_idx = split_by_scene(len(scenes), split_seed)
    X_test, patches_test, y_test = assemble(scenes, test_idx)
    probs = predict_proba(model, model_inputs(kind, X_test, patches_test))
    scores = WindowScores(probabilities=probs, labels=y_test)
    f1_result = window_f1(scores, threshold)
    window = {
        "threshold": threshold,
        "precision": f1_result.precision,
        "recall": f1_result.recall,
        "f1": f1_result.f1,
        "average_precision": average_precision(scores),
    }
    n_ref = n_det = n_matched = 0
    for i in test_idx:
        scene = scenes[i]
        scene_probs = predict_proba(model, model_inputs(kind, scene.features, scene.patches))
        events = correct_event_onsets(decode_events(scene_probs, threshold, min_gap_s=min_gap_s))
        score = event_metrics(scene.annotations, events, collar_s)
        n_ref += score.n_reference
        n_det += score.n_detected
        n_matched += score.n_matched
    precision = n_matched / n_det if n_det else None
    recall = n_matched / n_ref if n_ref else None
    f1 = None
    if precision is not None and recall is not None and precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    event = EventScore(
        precision=precision,
        recall=recall,
        f1=f1,
        insertion_error_rate=(n_det - n_matched) / n_det if n_det else None,
        deletion_error_rate=(n_ref - n_matched) / n_ref if n_ref else None,
        collar_s=collar_s,
        n_reference=n_ref,
        n_detected=n_det,
        n_matched=n_matched,
    )
    return EvalResult(kind=kind, threshold=threshold, window=window, event=event,
                      curve=det_curve(scores))


def event_score_to_dict(score: EventScore) -> dict:
    return {
        "precision": score.precision,
        "recall": score.recall,
        "f1": score.f1,
        "insertion_error_rate": score.insertion_error_rate,
        "deletion_error_rate": score.deletion_error_rate,
        "collar_s": score.collar_s,
        "n_reference": score.n_reference,
        "n_detected": score.n_detected,
        "n_matched": score.n_matched,
    }


def metrics_json(results: list[EvalResult]) -> str:
    payload = []
    for r in results:
        payload.append(
            {"kind": r.kind, "window": r.window, "event": event_score_to_dict(r.event)}
        )
    return json.dumps({"models": payload}, indent=2) + "\n"
