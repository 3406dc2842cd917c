import numpy as np
import pytest

from shotlog.errors import ConfigurationError
from shotlog.features import (
    FEATURE_NAMES,
    featurize_dataset,
    features_for_series,
    features_to_csv,
    window_features,
)
from shotlog.indicators import LevelSeries
from shotlog.labeling import WindowLabeling


def test_worked_example_spike():
    fv = window_features([50, 50, 80, 52, 50, 50, 50, 50])
    assert fv.max_level_db == 80
    assert fv.max_diff_from_median_db == 30  # median of the 8 values is 50
    assert fv.max_pos_change_db == 30
    assert fv.max_neg_change_db == -28
    assert fv.time_between_extreme_changes_s == pytest.approx(0.125)


def test_constant_window():
    fv = window_features([40.0] * 8)
    assert fv.as_array().tolist() == [40.0, 0.0, 0.0, 0.0, 0.0]


def test_monotone_ramp_edge_case():
    fv = window_features(np.arange(40.0, 48.0))
    assert fv.max_pos_change_db == 1.0
    assert fv.max_neg_change_db == 1.0  # no drop exists; signed minimum stays +1
    assert fv.time_between_extreme_changes_s == 0.0  # first-occurrence ties


def test_wrong_length_rejected():
    with pytest.raises(ValueError):
        window_features([1.0] * 7)


def test_level_shift_moves_only_max_level():
    rng = np.random.default_rng(0)
    for _ in range(50):
        window = rng.uniform(-80, -20, 8)
        base = window_features(window).as_array()
        shifted = window_features(window + 7.5).as_array()
        assert shifted[0] == pytest.approx(base[0] + 7.5, abs=1e-12)
        assert np.allclose(shifted[1:], base[1:], atol=1e-12)


def test_feature_inequalities():
    rng = np.random.default_rng(1)
    for _ in range(200):
        fv = window_features(rng.uniform(-90, 0, 8))
        assert fv.max_diff_from_median_db >= 0
        assert fv.max_pos_change_db >= fv.max_neg_change_db
        assert -0.875 <= fv.time_between_extreme_changes_s <= 0.875


def test_impulse_louder_than_constant_in_shape_features():
    impulse = window_features([-60, -60, -25, -35, -45, -55, -60, -60])
    flat = window_features([-60.0] * 8)
    assert impulse.max_diff_from_median_db > flat.max_diff_from_median_db
    assert impulse.max_pos_change_db > flat.max_pos_change_db
    assert abs(impulse.max_neg_change_db) > abs(flat.max_neg_change_db)


def test_window_count_20s_series():
    series = LevelSeries(values_db=np.zeros(160) - 60)
    assert features_for_series(series).shape == (153, 5)


def test_featurize_dataset_alignment():
    series = LevelSeries(values_db=np.zeros(160) - 60)
    labeling = WindowLabeling(labels=np.zeros(153, dtype=bool))
    X, y = featurize_dataset(series, labeling)
    assert X.shape == (153, 5)
    assert y.shape == (153,)


def test_featurize_dataset_mismatch_rejected():
    series = LevelSeries(values_db=np.zeros(160) - 60)
    labeling = WindowLabeling(labels=np.zeros(150, dtype=bool))
    with pytest.raises(ConfigurationError):
        featurize_dataset(series, labeling)


def test_empty_series_gives_empty_matrix():
    series = LevelSeries(values_db=np.zeros(5) - 60)  # shorter than one window
    assert features_for_series(series).shape == (0, 5)


def test_matrix_matches_scalar_api():
    rng = np.random.default_rng(4)
    values = rng.uniform(-80, -20, 40)
    series = LevelSeries(values_db=values)
    matrix = features_for_series(series)
    for i in range(len(matrix)):
        assert np.allclose(matrix[i], window_features(values[i : i + 8]).as_array())


def test_csv_export(tmp_path):
    series = LevelSeries(values_db=np.linspace(-70, -30, 20))
    X = features_for_series(series)
    path = tmp_path / "features.csv"
    features_to_csv(X, path, labels=np.zeros(len(X), dtype=bool))
    lines = path.read_text().splitlines()
    assert lines[0].split(",") == list(FEATURE_NAMES) + ["label"]
    assert len(lines) == len(X) + 1
