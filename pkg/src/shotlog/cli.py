"""Command line interface: synth | train | eval | detect | logbook | plot-det.

Every command is driven by a TOML config plus flag overrides (flags win)
and is reproducible from config + seed: artifacts embed timestamps only
from the manifest, never from the clock. Exit codes: 0 success, 1
internal failure, 2 user/config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import traceback
from datetime import datetime, timedelta
from pathlib import Path
from zoneinfo import ZoneInfo

import numpy as np

from . import __version__
from .clip_io import read_annotations, read_wav
from .config import PipelineConfig, apply_overrides, load_config
from .detector import (
    AnchoredEvent,
    RegulatoryCounters,
    correct_event_onsets,
    decode_events,
    estimate_annual_counts,
    sessions_from_events,
    sessions_to_jsonl,
    update_counters,
)
from .errors import ConfigurationError, FitError, FormatError, ValidationError
from .eval_metrics import det_curve_to_csv, format_metrics_table, read_det_csv
from .models import MODEL_KINDS, TrainConfig, kind_of, load_model, predict_proba, save_model
from .pipeline import (
    SynthSettings,
    atomic_write_text,
    evaluate_pipeline,
    load_corpus_windows,
    metrics_json,
    model_inputs,
    read_manifest,
    scene_windows,
    synthesize_corpus,
    train_pipeline,
)

logger = logging.getLogger("shotlog")


def _setup_logging():
    level = os.environ.get("SHOTLOG_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _load_configuration(args) -> PipelineConfig:
    config = load_config(args.config) if args.config else PipelineConfig()
    overrides = {
        "out_dir": getattr(args, "out", None),
        "seed": getattr(args, "seed", None),
        "timezone": getattr(args, "timezone", None),
    }
    if getattr(args, "n_scenes", None) is not None:
        overrides["synth.n_scenes"] = args.n_scenes
    if getattr(args, "kind", None) is not None:
        overrides["train.kind"] = args.kind
    if getattr(args, "epochs", None) is not None:
        overrides["train.epochs"] = args.epochs
    if getattr(args, "learning_rate", None) is not None:
        overrides["train.learning_rate"] = args.learning_rate
    if getattr(args, "batch_size", None) is not None:
        overrides["train.batch_size"] = args.batch_size
    if getattr(args, "collar", None) is not None:
        overrides["eval.collar_s"] = args.collar
    if getattr(args, "threshold", None) is not None:
        overrides["detect.threshold"] = args.threshold
    return apply_overrides(config, overrides)


def _load_wav_pool(directory):
    paths = sorted(Path(directory).glob("*.wav"))
    if not paths:
        raise ConfigurationError(f"no WAV files in pool directory {directory}")
    return [read_wav(p) for p in paths]


def _resolve_pools(config: PipelineConfig):
    synth = config.synth
    dirs = (synth.background_dir, synth.gunshot_dir, synth.explosion_dir)
    if not any(dirs):
        return None  # proxy material
    if not all(dirs):
        raise ConfigurationError(
            "either all of background_dir/gunshot_dir/explosion_dir or none"
        )
    return tuple(_load_wav_pool(d) for d in dirs)


def _manifest_path(data_arg) -> Path:
    path = Path(data_arg)
    if path.is_dir():
        path = path / "manifest.csv"
    if not path.exists():
        raise ConfigurationError(f"no manifest at {path}")
    return path


def cmd_synth(args) -> int:
    config = _load_configuration(args)
    synth = config.synth
    settings = SynthSettings(
        n_scenes=synth.n_scenes,
        duration_s=synth.duration_s,
        sample_rate_hz=synth.sample_rate_hz,
        gunshot_rate_per_hour=synth.gunshot_rate_per_hour,
        explosion_rate_per_hour=synth.explosion_rate_per_hour,
        snr_db_range=(synth.snr_db_lo, synth.snr_db_hi),
        base_timestamp=synth.base_timestamp,
    )
    records = synthesize_corpus(config.out_dir, config.seed, settings,
                                pools=_resolve_pools(config))
    total_guns = sum(r.n_gunshots for r in records)
    total_booms = sum(r.n_explosions for r in records)
    print(
        f"wrote {len(records)} scenes to {config.out_dir} "
        f"({total_guns} gunshots, {total_booms} explosions); manifest.csv updated"
    )
    return 0


def _train_config(config: PipelineConfig) -> TrainConfig:
    train = config.train
    return TrainConfig(
        learning_rate=train.learning_rate,
        epochs=train.epochs,
        batch_size=train.batch_size,
        l2=train.l2,
        momentum=train.momentum,
        class_weight=train.class_weight if train.class_weight > 0 else None,
        seed=config.seed,
    )


def cmd_train(args) -> int:
    config = _load_configuration(args)
    kind = config.train.kind
    if kind not in MODEL_KINDS:
        raise ConfigurationError(f"invalid model kind {kind!r}; valid kinds: {', '.join(MODEL_KINDS)}")
    manifest = _manifest_path(args.data)
    logger.info("loading corpus from %s", manifest)
    scenes = load_corpus_windows(manifest, label_mode=config.train.label_mode)
    result = train_pipeline(scenes, kind, _train_config(config), split_seed=config.seed)
    model_path = Path(args.model_out) if args.model_out else Path(config.out_dir) / f"model_{kind}.json"
    model_path.parent.mkdir(parents=True, exist_ok=True)
    tmp = model_path.with_name(f".{model_path.name}.tmp")
    save_model(result.model, tmp, train_config=_train_config(config), threshold=result.threshold)
    os.replace(tmp, model_path)
    f1 = "n/a" if result.validation_f1 is None else f"{result.validation_f1:.4f}"
    ap = "n/a" if result.validation_ap is None else f"{result.validation_ap:.4f}"
    print(
        f"trained {kind} on {len(scenes)} scenes; validation F1 {f1}, AP {ap}, "
        f"threshold {result.threshold:.4f}; model written to {model_path}"
    )
    return 0


def cmd_eval(args) -> int:
    config = _load_configuration(args)
    manifest = _manifest_path(args.data)
    scenes = load_corpus_windows(manifest, label_mode=config.train.label_mode)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = []
    curves = {}
    for model_path in args.model:
        model, _, stored_threshold = load_model(model_path)
        kind = kind_of(model)
        threshold = config.detect.threshold if config.detect.threshold > 0 else stored_threshold
        if threshold is None:
            raise ConfigurationError(
                f"{model_path} stores no threshold; set detect.threshold in the config"
            )
        result = evaluate_pipeline(
            scenes, model, kind, float(threshold), split_seed=config.seed,
            collar_s=config.eval.collar_s, min_gap_s=config.eval.min_gap_s,
        )
        results.append(result)
        curves[kind] = result.curve
        det_curve_to_csv(result.curve, out_dir / f"det_{kind}.csv")
    atomic_write_text(out_dir / "metrics.json", metrics_json(results))
    from .plots import plot_det_curves

    plot_det_curves(curves, out_dir / "det.svg")
    rows = [
        {
            "model": r.kind,
            "window_f1": r.window["f1"],
            "window_ap": r.window["average_precision"],
            "event_f1": r.event.f1,
            "insertion": r.event.insertion_error_rate,
            "deletion": r.event.deletion_error_rate,
        }
        for r in results
    ]
    print(format_metrics_table(
        rows, ["model", "window_f1", "window_ap", "event_f1", "insertion", "deletion"]
    ))
    print(f"wrote metrics.json, det.svg and {len(results)} DET CSVs to {out_dir}")
    return 0


def _anchor(record_start: str, timezone: ZoneInfo) -> datetime:
    try:
        stamp = datetime.fromisoformat(record_start)
    except ValueError as exc:
        raise ConfigurationError(f"bad start_timestamp {record_start!r} in manifest: {exc}")
    if stamp.tzinfo is None:
        return stamp.replace(tzinfo=timezone)
    return stamp.astimezone(timezone)


def _attribute_label(onset_s: float, annotations, collar_s: float) -> str:
    # class attribution is post-hoc: nearest ground-truth onset within the
    # collar names the event; otherwise default to gunshot
    best, best_distance = None, collar_s
    for ann in annotations:
        distance = abs(ann.onset_s - onset_s)
        if distance <= best_distance:
            best, best_distance = ann, distance
    return best.label if best else "gunshot"


def cmd_detect(args) -> int:
    config = _load_configuration(args)
    timezone = ZoneInfo(config.timezone)
    model, _, stored_threshold = load_model(args.model)
    kind = kind_of(model)
    threshold = config.detect.threshold if config.detect.threshold > 0 else stored_threshold
    if threshold is None:
        raise ConfigurationError("no decision threshold available; set detect.threshold")
    threshold = float(threshold)
    manifest = _manifest_path(args.data)
    base = manifest.parent
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    detection_rows = []
    anchored_events = []
    for record in read_manifest(manifest):
        if not record.start_timestamp:
            raise ConfigurationError(f"{record.scene_id}: manifest row lacks start_timestamp")
        start = _anchor(record.start_timestamp, timezone)
        clip = read_wav(base / record.wav)
        windows = scene_windows(clip, [], record.scene_id)
        probs = predict_proba(model, model_inputs(kind, windows.features, windows.patches))
        events = correct_event_onsets(
            decode_events(probs, threshold, min_gap_s=config.detect.min_gap_s)
        )
        annotations = []
        annotation_path = base / record.annotations if record.annotations else None
        if annotation_path and annotation_path.exists():
            annotations = read_annotations(annotation_path)
        for event in events:
            label = _attribute_label(event.onset_s, annotations, config.eval.collar_s)
            onset_time = start + timedelta(seconds=event.onset_s)
            offset_time = start + timedelta(seconds=event.offset_s)
            detection_rows.append(
                {
                    "source_file": record.wav,
                    "onset_s": event.onset_s,
                    "offset_s": event.offset_s,
                    "onset_time": onset_time.isoformat(),
                    "offset_time": offset_time.isoformat(),
                    "peak_probability": event.peak_probability,
                    "n_windows": event.n_windows,
                    "label": label,
                }
            )
            anchored_events.append(
                AnchoredEvent(onset=onset_time, offset=offset_time, label=label,
                              peak_probability=event.peak_probability)
            )
    atomic_write_text(
        out_dir / "detections.jsonl",
        "".join(json.dumps(row) + "\n" for row in detection_rows),
    )
    _write_logbook(anchored_events, config, out_dir)
    print(f"{len(detection_rows)} detections from {manifest}; logbook in {out_dir}")
    return 0


def _write_logbook(anchored_events, config: PipelineConfig, out_dir: Path) -> None:
    anchored_events.sort(key=lambda e: e.onset)
    sessions = sessions_from_events(anchored_events, config.detect.session_gap_s)
    sessions_to_jsonl(sessions, out_dir / "sessions.jsonl")
    by_year = {}
    for event in anchored_events:
        by_year.setdefault(event.onset.year, []).append(event)
    counters = []
    for year in sorted(by_year):
        updated, _ = update_counters(RegulatoryCounters(year=year), by_year[year])
        counters.append(updated.to_dict())
    estimate = None
    detect = config.detect
    if detect.insertion_rate >= 0 and detect.deletion_rate >= 0:
        result = estimate_annual_counts(
            len(anchored_events), detect.deletion_rate, detect.insertion_rate
        )
        if result is not None:
            estimate = {
                "corrected": result.corrected,
                "lower": result.lower,
                "upper": result.upper,
            }
    payload = {
        "detected_event_count": len(anchored_events),
        "session_count": len(sessions),
        "out_of_hours_sessions": sum(1 for s in sessions if not s.within_permitted_hours),
        "counters": counters,
        "corrected_estimate": estimate,
    }
    atomic_write_text(out_dir / "logbook.json", json.dumps(payload, indent=2) + "\n")


def cmd_logbook(args) -> int:
    config = _load_configuration(args)
    timezone = ZoneInfo(config.timezone)
    anchored_events = []
    with open(args.detections, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            anchored_events.append(
                AnchoredEvent(
                    onset=datetime.fromisoformat(row["onset_time"]).astimezone(timezone),
                    offset=datetime.fromisoformat(row["offset_time"]).astimezone(timezone),
                    label=row.get("label", "gunshot"),
                    peak_probability=row.get("peak_probability"),
                )
            )
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_logbook(anchored_events, config, out_dir)
    print(f"logbook for {len(anchored_events)} events written to {out_dir}")
    return 0


def cmd_plot_det(args) -> int:
    from .plots import plot_det_curves

    curves = {}
    for csv_path in args.csv:
        label = Path(csv_path).stem.removeprefix("det_")
        curves[label] = read_det_csv(csv_path)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    plot_det_curves(curves, out)
    print(f"DET figure written to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shotlog",
        description="Detect, count and log impulsive noise events in environmental audio.",
    )
    parser.add_argument("--version", action="version", version=f"shotlog {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="root seed (overrides config)")

    p_synth = sub.add_parser("synth", help="synthesize a labeled scene corpus")
    common(p_synth)
    p_synth.add_argument("--n-scenes", type=int, help="number of scenes")
    p_synth.set_defaults(func=cmd_synth)

    p_train = sub.add_parser("train", help="train a window classifier")
    common(p_train)
    p_train.add_argument("--data", required=True, help="corpus directory or manifest.csv")
    p_train.add_argument("--kind", help=f"model kind: {', '.join(MODEL_KINDS)}")
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--learning-rate", type=float)
    p_train.add_argument("--batch-size", type=int)
    p_train.add_argument("--model-out", help="model container path")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate trained models on the test split")
    common(p_eval)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--model", action="append", required=True,
                        help="model container (repeatable)")
    p_eval.add_argument("--collar", type=float, help="event onset collar in seconds")
    p_eval.add_argument("--threshold", type=float, help="decision threshold override")
    p_eval.set_defaults(func=cmd_eval)

    p_detect = sub.add_parser("detect", help="decode events and build the logbook")
    common(p_detect)
    p_detect.add_argument("--data", required=True, help="manifest with wavs and timestamps")
    p_detect.add_argument("--model", required=True)
    p_detect.add_argument("--threshold", type=float)
    p_detect.add_argument("--timezone", help="IANA timezone for permitted-hours checks")
    p_detect.set_defaults(func=cmd_detect)

    p_logbook = sub.add_parser("logbook", help="rebuild sessions/counters from detections")
    common(p_logbook)
    p_logbook.add_argument("--detections", required=True, help="detections.jsonl")
    p_logbook.add_argument("--timezone")
    p_logbook.set_defaults(func=cmd_logbook)

    p_plot = sub.add_parser("plot-det", help="render DET curves from CSV files")
    p_plot.add_argument("--csv", action="append", required=True)
    p_plot.add_argument("--out", required=True, help="figure path (.svg or .png)")
    p_plot.set_defaults(func=cmd_plot_det)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, ValidationError, FormatError, FitError,
            FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
