"""Hand-designed level features for 1 s windows (8 level samples).

Five features summarize the impulsive character of the window: the peak
level, its excursion above the window median, the largest rise and drop
between consecutive 125 ms steps, and the signed time from the rise to
the drop. Adding a constant to all levels shifts only the peak; the
other four are translation-invariant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .indicators import HOP_S, LevelSeries
from .labeling import WindowLabeling

WINDOW_SAMPLES = 8  # 1 s window / 0.125 s hop

FEATURE_NAMES = (
    "max_level_db",
    "max_diff_from_median_db",
    "max_pos_change_db",
    "max_neg_change_db",
    "time_between_extreme_changes_s",
)


@dataclass
class FeatureVector:
    max_level_db: float
    max_diff_from_median_db: float
    max_pos_change_db: float
    max_neg_change_db: float
    time_between_extreme_changes_s: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [
                self.max_level_db,
                self.max_diff_from_median_db,
                self.max_pos_change_db,
                self.max_neg_change_db,
                self.time_between_extreme_changes_s,
            ]
        )


def window_features(levels) -> FeatureVector:
    """Compute the five features of one 8-sample level window.

    The drop feature is the signed minimum consecutive difference, and the
    time feature is (index of extreme drop - index of extreme rise) * hop,
    ties broken by first occurrence.
    """
    values = np.asarray(levels, dtype=np.float64)
    if values.shape != (WINDOW_SAMPLES,):
        raise ValueError(f"expected exactly {WINDOW_SAMPLES} level values, got {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError("level values must be finite")
    row = _feature_matrix(values[None, :])[0]
    return FeatureVector(*row)


def _feature_matrix(windows: np.ndarray) -> np.ndarray:
    """Vectorized features for an [n x 8] array of level windows."""
    diffs = np.diff(windows, axis=1)
    f1 = windows.max(axis=1)
    f2 = f1 - np.median(windows, axis=1)
    arg_rise = diffs.argmax(axis=1)
    arg_drop = diffs.argmin(axis=1)
    f3 = diffs[np.arange(len(diffs)), arg_rise]
    f4 = diffs[np.arange(len(diffs)), arg_drop]
    f5 = (arg_drop - arg_rise) * HOP_S
    return np.column_stack([f1, f2, f3, f4, f5])


def features_for_series(series: LevelSeries) -> np.ndarray:
    """Feature matrix for every 1 s window of a level series, hop 0.125 s.

    Returns an [n_windows x 5] array; n_windows = len(series) - 7.
    """
    values = series.values_db
    n_windows = len(values) - WINDOW_SAMPLES + 1
    if n_windows <= 0:
        return np.zeros((0, len(FEATURE_NAMES)))
    windows = np.lib.stride_tricks.sliding_window_view(values, WINDOW_SAMPLES)
    return _feature_matrix(np.ascontiguousarray(windows))


def featurize_dataset(series: LevelSeries, labeling: WindowLabeling):
    """Pair each window's features with its label.

    The series and labeling must live on the same 0.125 s grid and agree
    on the window count; otherwise the inputs were computed from different
    signals and combining them would silently misalign.
    """
    if labeling.hop_s != series.hop_s:
        raise ConfigurationError(
            f"grid mismatch: series hop {series.hop_s} vs labeling hop {labeling.hop_s}"
        )
    features = features_for_series(series)
    if len(features) != len(labeling.labels):
        raise ConfigurationError(
            f"window count mismatch: {len(features)} feature windows vs "
            f"{len(labeling.labels)} labels"
        )
    return features, np.asarray(labeling.labels, dtype=bool)


def features_to_csv(features: np.ndarray, path, labels=None) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = list(FEATURE_NAMES) + (["label"] if labels is not None else [])
        writer.writerow(header)
        for i, row in enumerate(features):
            out = [f"{v:.6f}" for v in row]
            if labels is not None:
                out.append(str(int(labels[i])))
            writer.writerow(out)
