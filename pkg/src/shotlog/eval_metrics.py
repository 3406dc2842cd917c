"""Window-wise and event-wise evaluation metrics.

Window scores yield F1, step-wise average precision and DET curves;
discrete detections are matched to reference events by onset within a
collar, giving event-wise precision/recall/F1 and the complementary
insertion and deletion error rates. Metrics that would divide by zero
are reported as None, never silently as 0 or NaN.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

DEFAULT_COLLAR_S = 0.5


@dataclass
class WindowScores:
    """Aligned per-window probabilities and ground-truth labels."""

    probabilities: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.probabilities = np.asarray(self.probabilities, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=bool)
        if self.probabilities.shape != self.labels.shape:
            raise ValueError("probabilities and labels must be aligned")
        if np.any((self.probabilities < 0) | (self.probabilities > 1)):
            raise ValueError("probabilities must lie in [0, 1]")


@dataclass
class WindowF1:
    precision: float | None
    recall: float | None
    f1: float | None


@dataclass
class DetCurve:
    """(threshold, FPR, FNR) points ordered by descending threshold,
    starting from the +inf sentinel (FPR 0, FNR 1)."""

    points: list[tuple[float, float, float]]

    def to_arrays(self):
        thresholds = np.array([p[0] for p in self.points])
        fpr = np.array([p[1] for p in self.points])
        fnr = np.array([p[2] for p in self.points])
        return thresholds, fpr, fnr


@dataclass
class EventScore:
    precision: float | None
    recall: float | None
    f1: float | None
    insertion_error_rate: float | None
    deletion_error_rate: float | None
    collar_s: float
    n_reference: int
    n_detected: int
    n_matched: int


def _confusion(scores: WindowScores, threshold: float):
    predicted = scores.probabilities >= threshold
    tp = int(np.sum(predicted & scores.labels))
    fp = int(np.sum(predicted & ~scores.labels))
    fn = int(np.sum(~predicted & scores.labels))
    tn = int(np.sum(~predicted & ~scores.labels))
    return tp, fp, fn, tn


def window_f1(scores: WindowScores, threshold: float) -> WindowF1:
    """Precision/recall/F1 of thresholded window probabilities.

    Prediction is positive when probability >= threshold. Undefined
    quantities (no predicted positives, no reference positives) come back
    as None.
    """
    tp, fp, fn, _ = _confusion(scores, threshold)
    precision = tp / (tp + fp) if (tp + fp) > 0 else None
    recall = tp / (tp + fn) if (tp + fn) > 0 else None
    if precision is None or recall is None or precision + recall == 0:
        f1 = None
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return WindowF1(precision=precision, recall=recall, f1=f1)


def average_precision(scores: WindowScores) -> float | None:
    """Step-wise average precision: mean of precision-at-rank over the
    positives, ranked by descending score with stable tie order."""
    n_pos = int(scores.labels.sum())
    if n_pos == 0:
        return None
    order = np.argsort(-scores.probabilities, kind="stable")
    ranked_labels = scores.labels[order]
    hits = np.cumsum(ranked_labels)
    ranks = np.arange(1, len(ranked_labels) + 1)
    precisions_at_positives = hits[ranked_labels] / ranks[ranked_labels]
    return float(precisions_at_positives.sum() / n_pos)


def det_curve(scores: WindowScores) -> DetCurve:
    """DET points at every distinct score plus the +/-inf sentinels."""
    n_pos = int(scores.labels.sum())
    n_neg = len(scores.labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("DET curve needs both classes present")
    points = [(math.inf, 0.0, 1.0)]
    for threshold in np.unique(scores.probabilities)[::-1]:
        tp, fp, fn, tn = _confusion(scores, float(threshold))
        points.append((float(threshold), fp / (fp + tn), fn / (fn + tp)))
    points.append((-math.inf, 1.0, 0.0))
    return DetCurve(points=points)


def event_metrics(reference, detected, collar_s: float = DEFAULT_COLLAR_S) -> EventScore:
    """Match detections to reference events by onset within the collar.

    Greedy matching in onset order: a detection claims the earliest
    unmatched reference whose onset lies within ``collar_s``. Insertion
    rate is the fraction of unmatched detections, deletion rate the
    fraction of unmatched references; under onset-only matching these are
    exactly 1 - precision and 1 - recall.
    """
    if collar_s < 0:
        raise ValueError("collar must be nonnegative")
    ref_onsets = [r.onset_s for r in reference]
    det_onsets = [d.onset_s for d in detected]
    matched_ref = [False] * len(ref_onsets)
    n_matched = 0
    for det_onset in det_onsets:
        for j, ref_onset in enumerate(ref_onsets):
            if not matched_ref[j] and abs(det_onset - ref_onset) <= collar_s:
                matched_ref[j] = True
                n_matched += 1
                break
    n_ref, n_det = len(ref_onsets), len(det_onsets)
    precision = n_matched / n_det if n_det else None
    recall = n_matched / n_ref if n_ref else None
    if precision is None or recall is None or precision + recall == 0:
        f1 = None
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return EventScore(
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


def det_curve_to_csv(curve: DetCurve, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "false_positive_rate", "false_negative_rate"])
        for threshold, fpr, fnr in curve.points:
            writer.writerow([repr(threshold), repr(fpr), repr(fnr)])


def read_det_csv(path) -> DetCurve:
    points = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            points.append((float(row[0]), float(row[1]), float(row[2])))
    return DetCurve(points=points)


def format_metrics_table(rows: list[dict], columns: list[str]) -> str:
    """Aligned-column text for a list of metric dicts (None prints as 'n/a')."""

    def fmt(value):
        if value is None:
            return "n/a"
        if isinstance(value, float):
            return f"{value:.4f}"
        return str(value)

    table = [[fmt(r.get(c)) for c in columns] for r in rows]
    widths = [max(len(c), *(len(t[i]) for t in table)) if table else len(c)
              for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for t in table:
        lines.append("  ".join(v.ljust(w) for v, w in zip(t, widths)))
    return "\n".join(lines)
