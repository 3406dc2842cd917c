"""Figure rendering for evaluation reports (matplotlib, headless)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .eval_metrics import DetCurve


def plot_det_curves(curves: dict[str, DetCurve], path, title="Detection error tradeoff") -> None:
    """One DET polyline per model, FPR vs FNR in percent.

    The figure is written to ``path`` (format from the suffix) with the
    date metadata stripped so reruns are byte-identical.
    """
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for label, curve in curves.items():
        _, fpr, fnr = curve.to_arrays()
        ax.plot(100 * fpr, 100 * fnr, label=label, linewidth=1.5)
    ax.set_xlabel("False positive rate (%)")
    ax.set_ylabel("False negative rate (%)")
    ax.set_title(title)
    ax.set_xlim(0, 100)
    ax.set_ylim(0, 100)
    ax.grid(True, alpha=0.4)
    ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(path, metadata=_stable_metadata(path))
    plt.close(fig)


def _stable_metadata(path) -> dict:
    suffix = str(path).rsplit(".", 1)[-1].lower()
    if suffix == "svg":
        return {"Date": None}
    if suffix == "png":
        return {"Software": None}
    return {}
