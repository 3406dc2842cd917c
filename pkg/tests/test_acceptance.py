"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The proxy end-to-end experiment (criteria 8-10) drives the real CLI on a
500-scene synthetic corpus and takes several minutes; everything else is
fast. Run with ``pytest tests/test_acceptance.py -v -s``.
"""

import hashlib
import itertools
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.signal import sosfilt

from shotlog.cli import main as cli_main


def check(number, name, condition, detail=""):
    status = "PASS" if condition else "FAIL"
    print(f"[criterion {number:2d}] {name}: {status}  {detail}")
    assert condition, f"criterion {number} ({name}) failed: {detail}"


# --- criterion 1: DSP correctness -----------------------------------------


def closed_form_a_db(f):
    """Independent restatement of the analytic A-weighting curve."""
    f = np.asarray(f, dtype=float)

    def response(f):
        return (12194.217**2 * f**4) / (
            (f**2 + 20.598997**2)
            * np.sqrt((f**2 + 107.65265**2) * (f**2 + 737.86223**2))
            * (f**2 + 12194.217**2)
        )

    return 20 * np.log10(response(f)) - 20 * np.log10(response(1000.0))


def test_criterion_01_a_weighting():
    from shotlog.indicators import BAND_CENTERS_HZ, a_weighting_gain_db, a_weighting_sos

    started = time.time()
    worst_closed = max(
        abs(a_weighting_gain_db(f) - closed_form_a_db(f)) for f in BAND_CENTERS_HZ
    )
    fs = 48000
    sos = a_weighting_sos(fs)
    sweep = [f for f in BAND_CENTERS_HZ if f >= 31.4] + [8000.0]
    worst_iir = 0.0
    for f in sweep:
        t = np.arange(fs) / fs
        x = np.sin(2 * np.pi * f * t)
        y = sosfilt(sos, x)
        measured = 10 * np.log10(np.mean(y[fs // 2 :] ** 2) / np.mean(x[fs // 2 :] ** 2))
        worst_iir = max(worst_iir, abs(measured - closed_form_a_db(f)))
    elapsed = time.time() - started
    check(
        1,
        "A-weighting closed form and IIR sweep",
        worst_closed <= 0.2 and worst_iir <= 0.5 and elapsed < 10.0,
        f"closed-form err {worst_closed:.4f} dB (<=0.2), sweep err {worst_iir:.4f} dB "
        f"(<=0.5, 31.5 Hz-8 kHz at 48 kHz), runtime {elapsed:.1f}s (<10)",
    )


# --- criterion 2: fast integrator ------------------------------------------


def test_criterion_02_fast_integrator():
    from shotlog.clip_io import AudioClip
    from shotlog.indicators import fast_time_average, level_series

    fs = 16000
    step = np.concatenate([np.zeros(fs), np.ones(2 * fs)])
    response = fast_time_average(step, fs)
    at_tau = response[fs + int(0.125 * fs) - 1]
    steady = response[-1]
    step_ratio = at_tau / steady
    step_ok = abs(step_ratio - (1 - math.exp(-1))) <= 0.02 * (1 - math.exp(-1))

    # decay through the full level-series path: sine burst then silence
    t = np.arange(fs) / fs
    clip = AudioClip(
        np.concatenate([np.sin(2 * np.pi * 1000 * t), np.zeros(3 * fs)]), fs
    )
    series = level_series(clip).values_db
    drops = -np.diff(series[10:28])  # well inside the silent tail, above the floor
    expected_db = -10 * np.log10(math.exp(-1.0))
    decay_ok = np.all(np.abs(drops - expected_db) <= 0.01 * expected_db)
    check(
        2,
        "fast integrator step and decay",
        step_ok and decay_ok,
        f"step at tau {step_ratio:.4f} vs {1 - math.exp(-1):.4f} (+-2%), "
        f"decay/hop {drops.mean():.4f} dB vs {expected_db:.4f} (+-1%)",
    )


# --- criterion 3: Viterbi vs exhaustive enumeration ------------------------


def brute_force_viterbi(model, values):
    def log_normal(x, mu, sigma):
        return -0.5 * (math.log(2 * math.pi * sigma**2) + (x - mu) ** 2 / sigma**2)

    best_path, best_score = None, -math.inf
    for path in itertools.product((0, 1), repeat=len(values)):
        score = math.log(model.initial[path[0]]) + log_normal(
            values[0], model.means_db[path[0]], model.stds_db[path[0]]
        )
        for step in range(1, len(values)):
            score += math.log(model.transitions[path[step - 1], path[step]])
            score += log_normal(
                values[step], model.means_db[path[step]], model.stds_db[path[step]]
            )
        if score > best_score:
            best_path, best_score = path, score
    return np.array(best_path)


def test_criterion_03_viterbi_oracle():
    from shotlog.indicators import LevelSeries
    from shotlog.labeling import HmmModel, viterbi_decode

    rng = np.random.default_rng(2024)
    matches = 0
    for _ in range(100):
        transitions = rng.uniform(0.05, 0.95, (2, 2))
        transitions /= transitions.sum(axis=1, keepdims=True)
        initial = rng.uniform(0.1, 0.9, 2)
        model = HmmModel(
            means_db=np.sort(rng.uniform(-80, -10, 2)),
            stds_db=rng.uniform(0.5, 6.0, 2),
            transitions=transitions,
            initial=initial / initial.sum(),
        )
        values = rng.uniform(-85, -5, int(rng.integers(2, 9)))
        decoded = viterbi_decode(model, LevelSeries(values_db=values))
        matches += int(np.array_equal(decoded, brute_force_viterbi(model, values)))
    check(3, "Viterbi equals exhaustive argmax", matches == 100, f"{matches}/100 exact")


# --- criterion 4: gradient oracles ------------------------------------------


def test_criterion_04_gradient_oracles():
    from shotlog.models.convnet import init_params, loss_and_gradients
    from shotlog.models.logistic import loss_and_gradient

    rng = np.random.default_rng(99)
    worst_logistic = 0.0
    for _ in range(5):
        X = rng.normal(size=(30, 5))
        y = (rng.uniform(size=30) < 0.4).astype(float)
        weights = rng.normal(size=5)
        bias = float(rng.normal())
        _, grad_w, grad_b = loss_and_gradient(weights, bias, X, y, l2=0.01, pos_weight=2.5)
        eps = 1e-5
        for i in range(6):
            if i < 5:
                up_w = weights.copy()
                up_w[i] += eps
                down_w = weights.copy()
                down_w[i] -= eps
                up, _, _ = loss_and_gradient(up_w, bias, X, y, 0.01, 2.5)
                down, _, _ = loss_and_gradient(down_w, bias, X, y, 0.01, 2.5)
                analytic = grad_w[i]
            else:
                up, _, _ = loss_and_gradient(weights, bias + eps, X, y, 0.01, 2.5)
                down, _, _ = loss_and_gradient(weights, bias - eps, X, y, 0.01, 2.5)
                analytic = grad_b
            fd = (up - down) / (2 * eps)
            worst_logistic = max(
                worst_logistic, abs(fd - analytic) / max(abs(fd), abs(analytic), 1e-12)
            )

    params = init_params(31)
    x = rng.normal(size=(4, 1, 27, 8))
    y = np.array([1.0, 0.0, 1.0, 0.0])
    _, grads = loss_and_gradients(params, x, y, pos_weight=3.0, l2=0.001)
    worst_cnn = 0.0
    for name, tensor in params.items():
        flat = tensor.ravel()
        grad_flat = grads[name].ravel()
        for i in rng.choice(flat.size, size=min(40, flat.size), replace=False):
            eps = 1e-5 * max(1.0, abs(flat[i]))
            original = flat[i]
            flat[i] = original + eps
            up, _ = loss_and_gradients(params, x, y, 3.0, 0.001)
            flat[i] = original - eps
            down, _ = loss_and_gradients(params, x, y, 3.0, 0.001)
            flat[i] = original
            fd = (up - down) / (2 * eps)
            if max(abs(fd), abs(grad_flat[i])) >= 1e-6:  # above the FD noise floor
                worst_cnn = max(
                    worst_cnn, abs(fd - grad_flat[i]) / max(abs(fd), abs(grad_flat[i]))
                )
        # layer-wise directional derivative stays well-conditioned even when
        # individual coordinates are tiny
        direction = rng.normal(size=tensor.shape)
        direction /= np.linalg.norm(direction)
        original = tensor.copy()
        tensor += 1e-6 * direction
        up, _ = loss_and_gradients(params, x, y, 3.0, 0.001)
        tensor[...] = original - 1e-6 * direction
        down, _ = loss_and_gradients(params, x, y, 3.0, 0.001)
        tensor[...] = original
        fd = (up - down) / 2e-6
        analytic = float(np.sum(grads[name] * direction))
        worst_cnn = max(worst_cnn, abs(fd - analytic) / max(abs(fd), abs(analytic), 1e-12))
    check(
        4,
        "gradient oracles",
        worst_logistic < 1e-6 and worst_cnn < 1e-5,
        f"logistic max rel err {worst_logistic:.2e} (<1e-6), "
        f"convnet max rel err {worst_cnn:.2e} (<1e-5)",
    )


# --- criterion 5: Poisson synthesis -----------------------------------------


def test_criterion_05_poisson_rates():
    from shotlog.scene_synth import sample_event_times

    rng = np.random.default_rng(1234)
    counts = np.array(
        [len(sample_event_times(1587.0, 20.0, rng)) for _ in range(10_000)]
    )
    expected = 1587.0 * 20.0 / 3600.0
    mean_ok = abs(counts.mean() - expected) <= 0.02 * expected
    var_ok = abs(counts.var() - counts.mean()) <= 0.05 * counts.mean()
    check(
        5,
        "Poisson event counts",
        mean_ok and var_ok,
        f"mean {counts.mean():.3f} vs {expected:.3f} (+-2%), "
        f"variance {counts.var():.3f} vs mean (+-5%)",
    )


# --- criterion 6: SNR fidelity ----------------------------------------------


def test_criterion_06_snr_fidelity():
    from shotlog.scene_synth import SceneSpec, build_proxy_pools, synthesize

    backgrounds, gunshots, explosions = build_proxy_pools(7, 16000)
    worst = 0.0
    n_placements = 0
    for seed in range(100):
        scene = synthesize(
            SceneSpec(
                seed=seed,
                background_pool=backgrounds,
                gunshot_pool=gunshots,
                explosion_pool=explosions,
            )
        )
        for placement in scene.placements:
            worst = max(worst, abs(placement.realized_snr_db - placement.target_snr_db))
            n_placements += 1
    check(
        6,
        "realized SNR within 0.1 dB of target",
        worst <= 0.1 and n_placements > 500,
        f"worst |realized-target| {worst:.2e} dB over {n_placements} placements",
    )


# --- criterion 7: metric oracles --------------------------------------------


def test_criterion_07_metric_oracles():
    from shotlog.clip_io import EventAnnotation
    from shotlog.detector import DetectionEvent
    from shotlog.eval_metrics import (
        WindowScores,
        average_precision,
        event_metrics,
        window_f1,
    )

    scores = WindowScores(
        probabilities=np.array([0.9, 0.8, 0.7, 0.6, 0.2]),
        labels=np.array([1, 1, 1, 0, 1], dtype=bool),
    )
    f1_result = window_f1(scores, 0.5)
    window_ok = (
        f1_result.precision == 0.75 and f1_result.recall == 0.75 and f1_result.f1 == 0.75
    )
    ap = average_precision(
        WindowScores(np.array([0.9, 0.8, 0.1]), np.array([1, 0, 1], dtype=bool))
    )
    ap_ok = abs(ap - (1.0 + 2.0 / 3.0) / 2.0) < 1e-12

    refs = [EventAnnotation(10.0 * i, 10.0 * i + 0.3, "gunshot") for i in range(92)]
    detections = [
        DetectionEvent(10.0 * i + 0.1, 10.0 * i + 1.1, 0.9, 1) for i in range(64)
    ] + [DetectionEvent(10.0 * i + 5.0, 10.0 * i + 6.0, 0.9, 1) for i in range(64, 67)]
    score = event_metrics(refs, detections, collar_s=0.5)
    paper_pairs_ok = (
        round(100 * score.precision, 1) == 95.5
        and round(100 * score.insertion_error_rate, 1) == 4.5
        and round(100 * score.recall, 1) == 69.6
        and round(100 * score.deletion_error_rate, 1) == 30.4
    )
    complement_ok = True
    rng = np.random.default_rng(17)
    for _ in range(25):
        fixture_refs = [
            EventAnnotation(float(o), float(o) + 0.2, "gunshot")
            for o in np.sort(rng.uniform(0, 400, int(rng.integers(1, 30))))
        ]
        fixture_dets = [
            DetectionEvent(float(o), float(o) + 1.0, 0.8, 1)
            for o in np.sort(rng.uniform(0, 400, int(rng.integers(1, 30))))
        ]
        s = event_metrics(fixture_refs, fixture_dets, collar_s=0.5)
        complement_ok &= abs(s.insertion_error_rate - (1 - s.precision)) < 1e-12
        complement_ok &= abs(s.deletion_error_rate - (1 - s.recall)) < 1e-12
    check(
        7,
        "metric oracles and complementarity",
        window_ok and ap_ok and paper_pairs_ok and complement_ok,
        "window F1 fixture, step-wise AP fixture, 95.5/4.5 and 69.6/30.4 pairs, "
        "insertion=1-P deletion=1-R on random fixtures",
    )


# --- criteria 8-10: proxy end-to-end experiment ------------------------------

N_SCENES = 500
SPLIT_SEED = 42

CONFIG_TEMPLATE = """
seed = 42
timezone = "Europe/Oslo"
out_dir = "{out}"

[synth]
n_scenes = {n_scenes}

[train]
kind = "cnn"
learning_rate = 0.01
epochs = 10
batch_size = 256

[eval]
collar_s = 0.5
"""


@pytest.fixture(scope="session")
def proxy_run(tmp_path_factory):
    """synth + train x3 + eval through the CLI, timed."""
    base = tmp_path_factory.mktemp("accept")
    data = base / "data"
    run = base / "run"
    config = base / "config.toml"
    config.write_text(CONFIG_TEMPLATE.format(out=data, n_scenes=N_SCENES))
    started = time.time()
    assert cli_main(["synth", "--config", str(config)]) == 0
    model_args = []
    for kind, extra in (
        ("logistic", ["--epochs", "300", "--learning-rate", "0.5"]),
        ("forest", []),
        ("cnn", []),
    ):
        model_path = run / f"model_{kind}.json"
        assert (
            cli_main(
                ["train", "--config", str(config), "--data", str(data),
                 "--kind", kind, "--model-out", str(model_path), "--out", str(run)]
                + extra
            )
            == 0
        )
        model_args += ["--model", str(model_path)]
    assert (
        cli_main(
            ["eval", "--config", str(config), "--data", str(data), "--out", str(run)]
            + model_args
        )
        == 0
    )
    runtime_s = time.time() - started
    metrics = json.loads((run / "metrics.json").read_text())
    by_kind = {entry["kind"]: entry for entry in metrics["models"]}
    return {
        "base": base,
        "data": data,
        "run": run,
        "config": config,
        "runtime_s": runtime_s,
        "metrics": by_kind,
    }


def test_criterion_08_proxy_end_to_end(proxy_run):
    metrics = proxy_run["metrics"]
    cnn = metrics["cnn"]["window"]
    logistic = metrics["logistic"]["window"]
    forest = metrics["forest"]["window"]
    runtime = proxy_run["runtime_s"]
    conditions = (
        cnn["f1"] >= 0.85
        and cnn["average_precision"] >= 0.90
        and logistic["f1"] >= 0.55
        and forest["f1"] >= 0.55
        and cnn["average_precision"] > logistic["average_precision"]
        and cnn["average_precision"] > forest["average_precision"]
        and runtime <= 15 * 60
    )
    check(
        8,
        "proxy end-to-end ordering and floors",
        conditions,
        f"cnn F1 {cnn['f1']:.3f} (>=0.85) AP {cnn['average_precision']:.3f} (>=0.90); "
        f"logistic F1 {logistic['f1']:.3f} AP {logistic['average_precision']:.3f}; "
        f"forest F1 {forest['f1']:.3f} AP {forest['average_precision']:.3f} "
        f"(each F1>=0.55, cnn AP strictly best); runtime {runtime:.0f}s (<=900)",
    )


def test_criterion_09_event_count_correction(proxy_run):
    from shotlog.detector import decode_events, estimate_annual_counts
    from shotlog.eval_metrics import event_metrics
    from shotlog.models import load_model, predict_proba, split_by_scene
    from shotlog.pipeline import load_corpus_windows, model_inputs

    model, _, threshold = load_model(proxy_run["run"] / "model_cnn.json")
    scenes = load_corpus_windows(proxy_run["data"] / "manifest.csv")
    _, val_idx, test_idx = split_by_scene(len(scenes), SPLIT_SEED)

    def decode_split(indices):
        n_ref = n_det = n_matched = 0
        for i in indices:
            scene = scenes[i]
            probs = predict_proba(model, model_inputs("cnn", scene.features, scene.patches))
            events = decode_events(probs, float(threshold))
            score = event_metrics(scene.annotations, events, collar_s=0.5)
            n_ref += score.n_reference
            n_det += score.n_detected
            n_matched += score.n_matched
        return n_ref, n_det, n_matched

    # error rates estimated on held-out validation data
    val_ref, val_det, val_matched = decode_split(val_idx)
    insertion = (val_det - val_matched) / val_det
    deletion = (val_ref - val_matched) / val_ref
    test_ref, test_det, _ = decode_split(test_idx)
    estimate = estimate_annual_counts(test_det, deletion, insertion)
    relative_error = abs(estimate.corrected - test_ref) / test_ref
    check(
        9,
        "corrected event count within 10%",
        relative_error <= 0.10,
        f"true {test_ref}, detected {test_det}, corrected {estimate.corrected:.0f} "
        f"[{estimate.lower:.0f}, {estimate.upper:.0f}] "
        f"(val insertion {insertion:.3f}, deletion {deletion:.3f}); "
        f"relative error {relative_error:.3f}",
    )


def sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def test_criterion_10_determinism(tmp_path_factory):
    base = tmp_path_factory.mktemp("determinism")
    digests = []
    for attempt in ("first", "second"):
        out = base / attempt
        data = out / "data"
        run = out / "run"
        config = out / "config.toml"
        config.parent.mkdir(parents=True, exist_ok=True)
        config.write_text(CONFIG_TEMPLATE.format(out=data, n_scenes=25))
        assert cli_main(["synth", "--config", str(config)]) == 0
        model_args = []
        for kind, extra in (
            ("logistic", ["--epochs", "120", "--learning-rate", "0.5"]),
            ("cnn", ["--epochs", "2"]),
        ):
            model_path = run / f"model_{kind}.json"
            assert (
                cli_main(
                    ["train", "--config", str(config), "--data", str(data),
                     "--kind", kind, "--model-out", str(model_path), "--out", str(run)]
                    + extra
                )
                == 0
            )
            model_args += ["--model", str(model_path)]
        assert (
            cli_main(
                ["eval", "--config", str(config), "--data", str(data), "--out", str(run)]
                + model_args
            )
            == 0
        )
        digests.append(
            {
                "manifest": sha256(data / "manifest.csv"),
                "model_logistic": sha256(run / "model_logistic.json"),
                "model_cnn": sha256(run / "model_cnn.json"),
                "metrics": sha256(run / "metrics.json"),
            }
        )
    check(
        10,
        "byte-identical synth+train+eval reruns",
        digests[0] == digests[1],
        f"digests match across reruns: {sorted(digests[0])}",
    )
