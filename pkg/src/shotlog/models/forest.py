"""Random forest of CART trees: Gini splits, bootstrap resampling and
per-split feature subsampling, grown from scratch on numpy arrays.

Trees are nested dicts ({"feature", "threshold", "left", "right"} or
{"leaf": p}) so the whole forest serializes to JSON unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_N_TREES = 100
DEFAULT_MAX_DEPTH = 12
DEFAULT_FEATURE_CANDIDATES = 2  # floor(sqrt(5)) of the five level features
DEFAULT_MIN_SAMPLES_SPLIT = 2


@dataclass
class ForestModel:
    trees: list
    bootstrap_seeds: list
    n_features: int

    def predict_proba(self, X) -> np.ndarray:
        """Mean of per-tree leaf probabilities."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        total = np.zeros(len(X))
        for tree in self.trees:
            out = np.empty(len(X))
            _tree_predict(tree, X, np.arange(len(X)), out)
            total += out
        return total / len(self.trees)

    def to_dict(self) -> dict:
        return {
            "trees": self.trees,
            "bootstrap_seeds": self.bootstrap_seeds,
            "n_features": self.n_features,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ForestModel":
        return cls(
            trees=data["trees"],
            bootstrap_seeds=data["bootstrap_seeds"],
            n_features=data["n_features"],
        )


def _tree_predict(node, X, idx, out):
    if "leaf" in node:
        out[idx] = node["leaf"]
        return
    mask = X[idx, node["feature"]] <= node["threshold"]
    _tree_predict(node["left"], X, idx[mask], out)
    _tree_predict(node["right"], X, idx[~mask], out)


def _best_split_for_feature(x, y):
    """Scan every boundary between distinct sorted values; returns
    (weighted_gini, midpoint_threshold) or None when the feature is constant."""
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    boundaries = np.nonzero(xs[:-1] < xs[1:])[0]
    if len(boundaries) == 0:
        return None
    n = len(xs)
    cum_pos = np.cumsum(ys)
    n_left = boundaries + 1.0
    pos_left = cum_pos[boundaries]
    n_right = n - n_left
    pos_right = cum_pos[-1] - pos_left
    p_left = pos_left / n_left
    p_right = pos_right / n_right
    gini = (n_left * 2 * p_left * (1 - p_left) + n_right * 2 * p_right * (1 - p_right)) / n
    best = int(np.argmin(gini))  # first occurrence keeps growth deterministic
    threshold = 0.5 * (xs[boundaries[best]] + xs[boundaries[best] + 1])
    return float(gini[best]), float(threshold)


def _grow(X, y, idx, depth, rng, max_depth, n_candidates, min_samples_split):
    labels = y[idx]
    probability = float(labels.mean())
    if (
        depth >= max_depth
        or len(idx) < min_samples_split
        or probability == 0.0
        or probability == 1.0
    ):
        return {"leaf": probability}
    n_features = X.shape[1]
    candidates = rng.choice(n_features, size=min(n_candidates, n_features), replace=False)
    best = None
    for feature in candidates:
        result = _best_split_for_feature(X[idx, feature], labels)
        if result is not None and (best is None or result[0] < best[0]):
            best = (result[0], int(feature), result[1])
    if best is None:
        return {"leaf": probability}
    _, feature, threshold = best
    mask = X[idx, feature] <= threshold
    return {
        "feature": feature,
        "threshold": threshold,
        "left": _grow(X, y, idx[mask], depth + 1, rng, max_depth, n_candidates,
                      min_samples_split),
        "right": _grow(X, y, idx[~mask], depth + 1, rng, max_depth, n_candidates,
                       min_samples_split),
    }


def train_forest(
    X,
    y,
    config,
    n_trees=DEFAULT_N_TREES,
    max_depth=DEFAULT_MAX_DEPTH,
    n_feature_candidates=DEFAULT_FEATURE_CANDIDATES,
    min_samples_split=DEFAULT_MIN_SAMPLES_SPLIT,
) -> ForestModel:
    """Grow the forest on bootstrap resamples, one child seed per tree.

    Single-class data degenerates to one constant leaf rather than an
    error; the forest then predicts that class probability everywhere.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(config.seed).spawn(n_trees)]
    if len(np.unique(y)) < 2:
        return ForestModel(
            trees=[{"leaf": float(y.mean())}],
            bootstrap_seeds=seeds[:1],
            n_features=X.shape[1],
        )
    trees = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        sample = rng.integers(len(y), size=len(y))
        trees.append(
            _grow(X, y, np.sort(sample), 0, rng, max_depth, n_feature_candidates,
                  min_samples_split)
        )
    return ForestModel(trees=trees, bootstrap_seeds=seeds, n_features=X.shape[1])
