import itertools

import numpy as np
import pytest

from shotlog.clip_io import EventAnnotation
from shotlog.errors import FitError
from shotlog.indicators import LevelSeries
from shotlog.labeling import (
    HmmModel,
    annotations_to_window_labels,
    fit_hmm,
    states_to_annotations,
    viterbi_decode,
    window_count,
)


def make_series(values):
    return LevelSeries(values_db=np.asarray(values, dtype=float))


def random_model(rng):
    means = np.sort(rng.uniform(-80, -10, 2))
    trans = rng.uniform(0.05, 0.95, (2, 2))
    trans /= trans.sum(axis=1, keepdims=True)
    initial = rng.uniform(0.1, 0.9, 2)
    initial /= initial.sum()
    return HmmModel(
        means_db=means,
        stds_db=rng.uniform(0.5, 6.0, 2),
        transitions=trans,
        initial=initial,
    )


def brute_force_path(model, values):
    """Exhaustive argmax over all 2^T state paths."""

    def log_normal(x, mu, sigma):
        return -0.5 * (np.log(2 * np.pi * sigma**2) + (x - mu) ** 2 / sigma**2)

    best, best_score = None, -np.inf
    for path in itertools.product((0, 1), repeat=len(values)):
        score = np.log(model.initial[path[0]]) + log_normal(
            values[0], model.means_db[path[0]], model.stds_db[path[0]]
        )
        for t in range(1, len(values)):
            score += np.log(model.transitions[path[t - 1], path[t]])
            score += log_normal(values[t], model.means_db[path[t]], model.stds_db[path[t]])
        if score > best_score:
            best, best_score = path, score
    return np.array(best)


class TestFitHmm:
    def test_recovers_separated_gaussians(self):
        rng = np.random.default_rng(42)
        states = (rng.uniform(size=2000) < 0.3).astype(int)
        values = np.where(
            states == 0, rng.normal(-60, 2, 2000), rng.normal(-20, 2, 2000)
        )
        model = fit_hmm(make_series(values))
        assert model.means_db[0] == pytest.approx(-60, abs=1.0)
        assert model.means_db[1] == pytest.approx(-20, abs=1.0)

    def test_constant_series_rejected(self):
        with pytest.raises(FitError):
            fit_hmm(make_series([-50.0] * 50))

    def test_short_series_rejected(self):
        with pytest.raises(FitError):
            fit_hmm(make_series([-50.0, -20.0] * 4))

    def test_em_loglik_nondecreasing(self):
        rng = np.random.default_rng(0)
        for seed in range(5):
            values = np.random.default_rng(seed).uniform(-80, -20, 120)
            model = fit_hmm(make_series(values), n_iter=20, tol=0.0)
            lls = np.array(model.training_log_likelihoods)
            assert len(lls) == 20
            assert np.all(np.diff(lls) >= -1e-8)

    def test_state_order_normalized(self):
        rng = np.random.default_rng(3)
        values = np.concatenate([rng.normal(-30, 1, 100), rng.normal(-70, 1, 100)])
        model = fit_hmm(make_series(values))
        assert model.means_db[1] > model.means_db[0]


class TestViterbi:
    def test_all_background_observations(self):
        model = HmmModel(
            means_db=np.array([-60.0, -20.0]),
            stds_db=np.array([2.0, 2.0]),
            transitions=np.array([[0.95, 0.05], [0.2, 0.8]]),
            initial=np.array([0.8, 0.2]),
        )
        path = viterbi_decode(model, make_series([-60.0, -60.1, -59.9, -60.0]))
        assert np.all(path == 0)

    def test_matches_brute_force_100_trials(self):
        rng = np.random.default_rng(7)
        for trial in range(100):
            model = random_model(rng)
            T = int(rng.integers(2, 9))
            values = rng.uniform(-85, -5, T)
            decoded = viterbi_decode(model, make_series(values))
            assert np.array_equal(decoded, brute_force_path(model, values)), trial

    def test_spike_vs_sticky_transitions(self):
        sticky = np.array([[0.99, 0.01], [0.01, 0.99]])
        values = np.array([-60.0, -60.0, -60.0, -20.0, -60.0, -60.0])
        loud = HmmModel(
            means_db=np.array([-60.0, -20.0]),
            stds_db=np.array([2.0, 2.0]),
            transitions=sticky,
            initial=np.array([0.99, 0.01]),
        )
        decoded = viterbi_decode(loud, make_series(values))
        assert np.array_equal(decoded, brute_force_path(loud, values))
        # huge emission gap beats the transition penalty
        assert decoded[3] == 1
        # overlapping emissions: the penalty wins and the spike stays background
        blurred = HmmModel(
            means_db=np.array([-60.0, -50.0]),
            stds_db=np.array([20.0, 20.0]),
            transitions=sticky,
            initial=np.array([0.99, 0.01]),
        )
        decoded = viterbi_decode(blurred, make_series(values))
        assert np.array_equal(decoded, brute_force_path(blurred, values))
        assert decoded[3] == 0


class TestStatesToAnnotations:
    def test_worked_example(self):
        anns = states_to_annotations([0, 0, 1, 1, 1, 0, 0], min_duration_s=0.2)
        assert len(anns) == 1
        assert anns[0].onset_s == pytest.approx(0.25)
        assert anns[0].offset_s == pytest.approx(0.625)

    def test_short_run_dropped(self):
        assert states_to_annotations([0, 0, 1, 0], min_duration_s=0.25) == []

    def test_all_background(self):
        assert states_to_annotations([0] * 10) == []

    def test_run_at_end_of_series(self):
        anns = states_to_annotations([0, 0, 1, 1], min_duration_s=0.125)
        assert len(anns) == 1
        assert anns[0].offset_s == pytest.approx(0.5)

    def test_label_override(self):
        anns = states_to_annotations([1, 1], min_duration_s=0.125, label="explosion")
        assert anns[0].label == "explosion"


class TestWindowLabels:
    def test_overlap_mode_positive(self):
        labeling = annotations_to_window_labels(
            [EventAnnotation(3.0, 3.2, "gunshot")], duration_s=6.0, mode="overlap"
        )
        # window 20 covers [2.5, 3.5) and intersects the event
        assert labeling.labels[20]

    def test_onset_only_mode(self):
        labeling = annotations_to_window_labels(
            [EventAnnotation(3.0, 3.2, "gunshot")], duration_s=6.0, mode="onset_only"
        )
        # window 25 covers [3.125, 4.125); onset 3.0 is outside
        assert not labeling.labels[25]
        # window 24 covers [3.0, 4.0); onset 3.0 is inside
        assert labeling.labels[24]

    def test_no_annotations_all_negative(self):
        labeling = annotations_to_window_labels([], duration_s=20.0)
        assert labeling.labels.shape == (153,)
        assert not labeling.labels.any()

    def test_window_count_formula(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            duration = float(rng.uniform(0.0, 40.0))
            expected = max(0, int(np.floor((duration - 1.0) / 0.125 + 1e-9)) + 1)
            assert window_count(duration) == expected

    def test_positive_window_count_bounds_per_event(self):
        rng = np.random.default_rng(8)
        hop, window = 0.125, 1.0
        for _ in range(50):
            onset = float(rng.uniform(2.0, 10.0))
            length = float(rng.uniform(0.05, 2.0))
            labeling = annotations_to_window_labels(
                [EventAnnotation(onset, onset + length, "gunshot")],
                duration_s=20.0,
                mode="overlap",
            )
            n_pos = int(labeling.labels.sum())
            assert np.floor(length / hop) <= n_pos <= np.ceil((length + window) / hop) + 1

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            annotations_to_window_labels([], 5.0, mode="bogus")
