"""Acceptance criteria, one test each. Every test prints a single PASS/FAIL line."""
import random
import time

import numpy as np
import pytest

import oracles as O
from conftest import tiny_config
from gradcheck_util import max_relative_error
from mtl_pipeline import accuracies, run_pipeline
from weakmtl import metrics as M
from weakmtl.datamodel import LabelSet, Provenance
from weakmtl.harness import MetricSummary, SweepConfig, aggregate, format_cell
from weakmtl.ingest import generate_synthetic, read_container, write_container
from weakmtl.oracle import oracle_labeler
from weakmtl.presets import loss_weights, preset
from weakmtl.trainer import RunConfig, RunResult, TaskWeight, train
from weakmtl.weaklabel import acquire_weak_labels

CELL = r"^\d{1,3}\.\d ± \d{1,3}\.\d$"


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return emit


def test_c01_metric_oracle_equivalence(report):
    t0 = time.perf_counter()
    rng = random.Random(1)
    worst = 0.0
    for _ in range(1000):
        n = rng.randint(2, 200)
        rate = rng.random()
        truth = [rng.random() < rate for _ in range(n)]
        truth[0], truth[1] = True, False
        pred = [rng.random() < 0.5 for _ in range(n)]
        c = M.ConfusionCounts.from_predictions(np.array(pred), np.array(truth))
        ref = O.brute_counts(pred, truth)
        assert (c.tp, c.fp, c.tn, c.fn) == ref
        for ours, theirs in ((M.weighted_accuracy, O.brute_wacc), (M.f1, O.brute_f1), (M.weighted_f1, O.brute_wf1)):
            worst = max(worst, abs(ours(c) - theirs(*ref)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 5.0
    assert report(1, ok, f"max abs diff {worst:.1e}, {elapsed:.2f}s"), (worst, elapsed)


def test_c02_wacc_spot_values(report):
    perfect = M.weighted_accuracy(M.ConfusionCounts(tp=40, fp=0, tn=60, fn=0))
    all_neg = M.weighted_accuracy(M.ConfusionCounts(tp=0, fp=0, tn=60, fn=40))
    mixed = M.weighted_accuracy(M.ConfusionCounts(tp=30, fp=10, tn=50, fn=10))
    ok = perfect == 1.0 and all_neg == 0.5 and abs(mixed - 95 / 120) <= 1e-12
    assert report(2, ok, f"perfect {perfect}, all-negative {all_neg}, mixed {mixed:.15f} vs {95 / 120:.15f}")


def score_fixture(seed=0, n=10_000):
    """1:9 imbalanced scores: positives ~ Beta(5,2), negatives ~ Beta(2,5)."""
    rng = np.random.default_rng(seed)
    labels = np.zeros(n, dtype=bool)
    labels[: n // 10] = True
    scores = np.where(labels, rng.beta(5, 2, n), rng.beta(2, 5, n))
    return scores, labels


def test_c03_wf1_pathology(report):
    t0 = time.perf_counter()
    scores, labels = score_fixture()
    (point,) = M.threshold_sweep(scores, labels, [0.9])
    elapsed = time.perf_counter() - t0
    # frozen regression values for seed 0
    assert (point.counts.tp, point.counts.fp, point.counts.tn, point.counts.fn) == (127, 0, 9000, 873)
    ok = point.wf1 > 0.70 and point.wacc < 0.55 and elapsed < 5.0
    assert report(3, ok, f"WF1(0.9) {point.wf1:.4f} (> 0.70), WAcc(0.9) {point.wacc:.4f} (< 0.55), {elapsed:.2f}s")


def test_c04_gradient_correctness(report):
    t0 = time.perf_counter()
    errors = {}
    for enc in ("avg", "bilstm", "transformer"):
        for fusion in ("early", "late", "hybrid"):
            errors[(enc, fusion)] = max_relative_error(enc, fusion)
    elapsed = time.perf_counter() - t0
    worst = max(errors, key=errors.get)
    ok = errors[worst] < 1e-4 and elapsed < 120
    assert report(4, ok, f"max rel err {errors[worst]:.1e} ({'/'.join(worst)}), 9 combos, {elapsed:.0f}s")


def test_c05_zero_lambda_reduction(report):
    t0 = time.perf_counter()
    data = generate_synthetic(tiny_config())
    from weakmtl.backbones import ModelConfig

    model = ModelConfig(encoder="avg", fusion="hybrid", input_dims=(6, 4, 3), hidden_dims=(8,), output_dim=8)
    same = []
    for seed in (0, 1, 2):
        base = RunConfig(model, "main", max_epochs=3, batch_size=16, seed=seed)
        single = train(base, data, record_checksums=True)
        zero = train(base.replace(aux_tasks=(TaskWeight("aux", 0.0),)), data, record_checksums=True)
        same.append(len(single.checksums) == 3 and single.checksums == zero.checksums)
    elapsed = time.perf_counter() - t0
    ok = all(same) and elapsed < 120
    assert report(5, ok, f"per-epoch checksums identical for seeds 0,1,2: {same}, {elapsed:.0f}s")


@pytest.fixture(scope="module")
def mtl_runs():
    t0 = time.perf_counter()
    results, conf = run_pipeline()
    return results, conf, time.perf_counter() - t0


def test_c06_synthetic_mtl_gain(report, mtl_runs):
    results, conf, elapsed = mtl_runs
    acc = accuracies(results)
    single, weak = acc["single"], acc["weak"]
    gain = 100 * (weak.mean() - single.mean())
    ratio = weak.std() / single.std()
    ok = gain >= 1.0 and ratio <= 1.5 and elapsed < 600
    detail = (f"single {format_cell(single.mean(), single.std())}, weak-MTL {format_cell(weak.mean(), weak.std())}, "
              f"gain {gain:+.2f} pts (>= 1.0), std ratio {ratio:.2f} (<= 1.5), labeler conf {conf:.3f}, {elapsed:.0f}s")
    assert report(6, ok, detail)


def test_c07_weak_strong_parity(report, mtl_runs):
    results, _, elapsed = mtl_runs
    acc = accuracies(results)
    diff = 100 * (acc["weak"].mean() - acc["strong"].mean())
    ok = abs(diff) <= 1.5 and elapsed < 600
    assert report(7, ok, f"weak - strong {diff:+.2f} pts (|.| <= 1.5)")


def test_c08_weak_label_pipeline(report, tmp_path):
    data, world = generate_synthetic(tiny_config(noise_scale=0.0, eta=0.0, latent_dim=3, n_train=300), return_world=True)
    agree = []
    for task in ("main", "aux"):
        weak = acquire_weak_labels(oracle_labeler(world, task), data)
        strong = data.label_set(task, "strong")
        agree.append(np.mean([np.array_equal(weak.labels[s], strong.labels[s]) for s in data.samples]))
    conf = 0.1 + 0.2  # not exactly representable in decimal
    weak = acquire_weak_labels(oracle_labeler(world, "aux"), data)
    odd = LabelSet(weak.task, Provenance.WEAK, weak.labels, confidence=conf, source=weak.source)
    write_container(data.with_label_set(odd), tmp_path)
    back = read_container(tmp_path).label_set("aux", "weak").confidence
    ok = min(agree) == 1.0 and back == conf and np.float64(back).tobytes() == np.float64(conf).tobytes()
    assert report(8, ok, f"oracle agreement {[f'{100 * a:.1f}%' for a in agree]}, confidence {back!r} round-trips bit-exactly: {back == conf}")


def test_c09_protocol_fidelity(report):
    from weakmtl.backbones import ModelConfig

    base = RunConfig(ModelConfig(encoder="avg", fusion="early", input_dims=(3, 3, 3)), "main")
    n = len(SweepConfig(base).configurations())
    fake = [RunResult(s, base.to_dict(), 0, v, [], [], [], {"main": {"task_id": "main", "accuracy": v, "f1": v, "average": {}, "per_class": {}}})
            for s, v in enumerate((2.0, 4.0))]
    summary = aggregate(fake, base).metrics["main/accuracy"]
    cell = MetricSummary.of([0.70, 0.74]).cell()
    import re

    ok = n == 24 and summary.mean == 3.0 and summary.std == 1.0 and re.match(CELL, cell) is not None and cell == "72.0 ± 2.0"
    assert report(9, ok, f"{n} grid configurations, (2,4) -> mean {summary.mean} std {summary.std}, cell {cell!r}")


def test_c10_determinism(report, mtl_runs):
    first, _, _ = mtl_runs
    second, _ = run_pipeline()
    a = {arm: [r.content_hash() for r in rs] for arm, rs in first.items()}
    b = {arm: [r.content_hash() for r in rs] for arm, rs in second.items()}
    ok = a == b
    assert report(10, ok, f"{sum(len(v) for v in a.values())} RunResult content hashes identical across two executions: {ok}")


def test_c11_preset_fidelity(report):
    run = preset("iemocap/ef_lf_lstm")
    lam = loss_weights("sarcasm/mustard", "+emotion(w)", "ef_lf_lstm")
    ok = run.lr == 5e-4 and run.batch_size == 128 and lam == (0.4, 0.0, 1.0)
    assert report(11, ok, f"iemocap/ef_lf_lstm lr {run.lr} batch {run.batch_size}; MUStARD +Emotion(W) EF-LF LSTM lambda {lam}")
