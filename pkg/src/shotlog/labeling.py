"""Semi-automatic event timestamping and window-label construction.

A 2-state Gaussian HMM fitted to the A-weighted level series proposes
probable event spans (to be confirmed by a human downstream); ground
truth annotations are turned into per-window binary targets on the
shared 125 ms grid, either by span overlap or by onset membership.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .clip_io import EventAnnotation
from .errors import FitError
from .indicators import HOP_S, LevelSeries

WINDOW_LENGTH_S = 1.0

_STD_FLOOR_DB = 1e-3
_PROB_FLOOR = 1e-12


@dataclass
class WindowLabeling:
    """Binary targets for 1 s windows at 0.125 s hop; window i covers
    [i*hop, i*hop + 1.0) seconds."""

    labels: np.ndarray
    window_length_s: float = WINDOW_LENGTH_S
    hop_s: float = HOP_S

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=bool)


def window_count(duration_s: float, window_length_s=WINDOW_LENGTH_S, hop_s=HOP_S) -> int:
    if duration_s < window_length_s:
        return 0
    return int(math.floor((duration_s - window_length_s) / hop_s + 1e-9)) + 1


@dataclass
class HmmModel:
    """2-state HMM with Gaussian emissions over dB levels.

    State 0 is background, state 1 the event state; after fitting, states
    are relabeled so state 1 has the higher emission mean.
    """

    means_db: np.ndarray
    stds_db: np.ndarray
    transitions: np.ndarray
    initial: np.ndarray

    def __post_init__(self):
        self.means_db = np.asarray(self.means_db, dtype=np.float64)
        self.stds_db = np.asarray(self.stds_db, dtype=np.float64)
        self.transitions = np.asarray(self.transitions, dtype=np.float64)
        self.initial = np.asarray(self.initial, dtype=np.float64)
        if self.means_db.shape != (2,) or self.stds_db.shape != (2,):
            raise ValueError("expected 2 emission states")
        if np.any(self.stds_db <= 0):
            raise ValueError("emission stds must be positive")
        if self.transitions.shape != (2, 2) or np.any(
            np.abs(self.transitions.sum(axis=1) - 1.0) > 1e-9
        ):
            raise ValueError("transition rows must sum to 1")


def _emission_log_probs(model: HmmModel, values: np.ndarray) -> np.ndarray:
    """[T x 2] Gaussian log densities."""
    var = model.stds_db**2
    return -0.5 * (
        np.log(2 * np.pi * var)[None, :]
        + (values[:, None] - model.means_db[None, :]) ** 2 / var[None, :]
    )


def _two_means(values: np.ndarray, max_iter=50):
    """Lloyd's algorithm with k=2 on scalars, centers seeded at min/max."""
    centers = np.array([values.min(), values.max()], dtype=np.float64)
    assign = None
    for _ in range(max_iter):
        new_assign = np.abs(values[:, None] - centers[None, :]).argmin(axis=1)
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for k in (0, 1):
            if np.any(assign == k):
                centers[k] = values[assign == k].mean()
    return centers, assign


def _forward_backward(model: HmmModel, values: np.ndarray):
    """Scaled forward-backward pass; returns (gamma, xi_sum, log_likelihood)."""
    T = len(values)
    emissions = np.exp(_emission_log_probs(model, values))
    emissions = np.maximum(emissions, _PROB_FLOOR)
    alpha = np.zeros((T, 2))
    scales = np.zeros(T)
    alpha[0] = model.initial * emissions[0]
    scales[0] = alpha[0].sum()
    alpha[0] /= scales[0]
    for t in range(1, T):
        alpha[t] = (alpha[t - 1] @ model.transitions) * emissions[t]
        scales[t] = alpha[t].sum()
        alpha[t] /= scales[t]
    beta = np.zeros((T, 2))
    beta[-1] = 1.0
    for t in range(T - 2, -1, -1):
        beta[t] = (model.transitions @ (emissions[t + 1] * beta[t + 1])) / scales[t + 1]
    gamma = alpha * beta
    gamma /= gamma.sum(axis=1, keepdims=True)
    xi_sum = np.zeros((2, 2))
    for t in range(T - 1):
        xi = (
            model.transitions
            * np.outer(alpha[t], emissions[t + 1] * beta[t + 1])
            / scales[t + 1]
        )
        xi_sum += xi
    return gamma, xi_sum, float(np.sum(np.log(scales)))


def _order_states(model: HmmModel) -> HmmModel:
    if model.means_db[0] <= model.means_db[1]:
        return model
    perm = [1, 0]
    return HmmModel(
        means_db=model.means_db[perm],
        stds_db=model.stds_db[perm],
        transitions=model.transitions[np.ix_(perm, perm)],
        initial=model.initial[perm],
    )


def fit_hmm(series: LevelSeries, n_iter=50, tol=1e-6) -> HmmModel:
    """Fit the 2-state HMM by Baum-Welch from a 2-means initialization.

    The fitted model carries the per-iteration log-likelihoods in
    ``model.training_log_likelihoods`` (nondecreasing up to numerical
    tolerance). Raises FitError for series that are too short or carry
    no level variation.
    """
    values = np.asarray(series.values_db, dtype=np.float64)
    if len(values) < 10:
        raise FitError(f"need at least 10 level samples, got {len(values)}")
    if np.ptp(values) < 1e-9:
        raise FitError(
            "level series is constant; the HMM cannot separate states - label manually"
        )
    centers, assign = _two_means(values)
    stds = np.zeros(2)
    for k in (0, 1):
        members = values[assign == k]
        stds[k] = members.std() if len(members) > 1 else 0.0
    stds = np.maximum(stds, np.maximum(values.std() * 0.05, _STD_FLOOR_DB))
    model = HmmModel(
        means_db=centers,
        stds_db=stds,
        transitions=np.array([[0.9, 0.1], [0.1, 0.9]]),
        initial=np.array([0.5, 0.5]),
    )
    log_likelihoods = []
    for _ in range(n_iter):
        gamma, xi_sum, ll = _forward_backward(model, values)
        log_likelihoods.append(ll)
        occupancy = gamma.sum(axis=0)
        transitions = xi_sum / np.maximum(xi_sum.sum(axis=1, keepdims=True), _PROB_FLOOR)
        means = (gamma * values[:, None]).sum(axis=0) / occupancy
        variances = (gamma * (values[:, None] - means[None, :]) ** 2).sum(axis=0) / occupancy
        model = HmmModel(
            means_db=means,
            stds_db=np.maximum(np.sqrt(variances), _STD_FLOOR_DB),
            transitions=transitions,
            initial=np.maximum(gamma[0], _PROB_FLOOR) / np.maximum(gamma[0], _PROB_FLOOR).sum(),
        )
        if len(log_likelihoods) > 1 and log_likelihoods[-1] - log_likelihoods[-2] < tol:
            break
    model = _order_states(model)
    model.training_log_likelihoods = log_likelihoods
    return model


def viterbi_decode(model: HmmModel, series: LevelSeries) -> np.ndarray:
    """Most probable state path given the model (0 = background, 1 = event)."""
    values = np.asarray(series.values_db, dtype=np.float64)
    if len(values) == 0:
        raise ValueError("empty series")
    log_emissions = _emission_log_probs(model, values)
    log_trans = np.log(np.maximum(model.transitions, _PROB_FLOOR))
    T = len(values)
    score = np.log(np.maximum(model.initial, _PROB_FLOOR)) + log_emissions[0]
    backpointer = np.zeros((T, 2), dtype=np.int64)
    for t in range(1, T):
        candidate = score[:, None] + log_trans
        backpointer[t] = candidate.argmax(axis=0)
        score = candidate.max(axis=0) + log_emissions[t]
    path = np.zeros(T, dtype=np.int64)
    path[-1] = int(score.argmax())
    for t in range(T - 1, 0, -1):
        path[t - 1] = backpointer[t, path[t]]
    return path


def states_to_annotations(
    states, hop_s=HOP_S, min_duration_s=HOP_S, label="gunshot"
) -> list[EventAnnotation]:
    """Turn maximal event-state runs into annotations, dropping runs
    shorter than ``min_duration_s``. Labels default to gunshot pending
    human confirmation."""
    states = np.asarray(states)
    annotations = []
    start = None
    for i, state in enumerate(list(states) + [0]):
        if state == 1 and start is None:
            start = i
        elif state != 1 and start is not None:
            duration = (i - start) * hop_s
            if duration >= min_duration_s - 1e-12:
                annotations.append(
                    EventAnnotation(onset_s=start * hop_s, offset_s=i * hop_s, label=label)
                )
            start = None
    return annotations


def annotations_to_window_labels(
    annotations, duration_s: float, mode: str = "overlap"
) -> WindowLabeling:
    """Binary window targets from annotations.

    ``overlap``: window positive iff it intersects any [onset, offset).
    ``onset_only``: positive iff any onset instant lies inside the window,
    restricting positives to the impulsive start of each event.
    """
    if mode not in ("overlap", "onset_only"):
        raise ValueError(f"unknown labeling mode {mode!r}")
    n = window_count(duration_s)
    labels = np.zeros(n, dtype=bool)
    if n == 0:
        return WindowLabeling(labels=labels)
    starts = np.arange(n) * HOP_S
    ends = starts + WINDOW_LENGTH_S
    for ann in annotations:
        if mode == "overlap":
            labels |= (ann.onset_s < ends) & (ann.offset_s > starts)
        else:
            labels |= (starts <= ann.onset_s) & (ann.onset_s < ends)
    return WindowLabeling(labels=labels)
