import csv
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import TINY_DIMS
from weakmtl.backbones import ModelConfig
from weakmtl.harness import (
    AggregateResult,
    MetricSummary,
    ReportEntry,
    SweepConfig,
    aggregate,
    format_cell,
    grid_search,
    load_aggregates,
    parse_table,
    report_table,
    seed_sweep,
    training_label,
    worker_count,
)
from weakmtl.trainer import RunConfig, RunResult, TaskWeight, train

SMALL = ModelConfig(encoder="avg", fusion="early", input_dims=TINY_DIMS, hidden_dims=(8,))
BASE = RunConfig(SMALL, "main", max_epochs=1, batch_size=16)


def fake_result(seed, acc, sel=None):
    test = {"main": {"task_id": "main", "accuracy": acc, "f1": acc / 2, "average": {"wacc": acc, "f1": acc / 2}, "per_class": {}}}
    return RunResult(seed, BASE.to_dict(), 0, acc if sel is None else sel, [], [], [], test)


def test_default_grid_has_24_configurations():
    sweep = SweepConfig(BASE)
    cfgs = sweep.configurations()
    assert len(cfgs) == 24
    assert len({c.config_hash() for c in cfgs}) == 24
    assert [(c.lr, c.batch_size) for c in cfgs[:7]] == [(1e-3, b) for b in (16, 32, 64, 128, 256, 512)] + [(5e-4, 16)]
    assert sweep.seeds == (0, 1, 2, 3, 4)
    with pytest.raises(ValueError):
        SweepConfig(BASE, lrs=())


def test_seed_aggregation_hand_values():
    agg = aggregate([fake_result(0, 2.0), fake_result(1, 4.0)], BASE)
    assert agg.metrics["main/accuracy"].mean == 3.0
    assert agg.metrics["main/accuracy"].std == 1.0
    assert agg.std_kind == "population"
    single = aggregate([fake_result(3, 0.7)], BASE)
    assert single.metrics["main/accuracy"].std == 0.0


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=6), st.randoms())
def test_aggregation_permutation_invariant(values, rnd):
    results = [fake_result(i, v) for i, v in enumerate(values)]
    shuffled = list(results)
    rnd.shuffle(shuffled)
    a, b = aggregate(results, BASE), aggregate(shuffled, BASE)
    assert a.to_dict() == b.to_dict()
    m = a.metrics["main/accuracy"]
    mean = sum(m.values) / len(m.values)
    assert m.mean == pytest.approx(mean)
    assert m.std == pytest.approx((sum((v - mean) ** 2 for v in m.values) / len(m.values)) ** 0.5, abs=1e-12)


def test_cell_format():
    assert format_cell(0.724, 0.021) == "72.4 ± 2.1"
    assert MetricSummary.of([0.7, 0.74]).cell() == "72.0 ± 2.0"


def test_single_config_grid_equals_direct_train(tiny, tmp_path):
    sweep = SweepConfig(BASE, lrs=(1e-3,), batch_sizes=(16,), seeds=(0,))
    board = grid_search(sweep, tiny, out_dir=tmp_path)
    direct = train(BASE.replace(lr=1e-3, batch_size=16, seed=0), tiny)
    assert len(board) == 1
    assert board[0].result_hashes == [direct.content_hash()]
    assert (tmp_path / board[0].config_hash / "0" / "result.json").exists()
    assert json.loads((tmp_path / "manifest.json").read_text())["std"] == "population"


def test_leaderboard_matches_resort_of_raw_file(tiny, tmp_path):
    sweep = SweepConfig(BASE, lrs=(1e-3, 1e-4), batch_sizes=(8, 32), seeds=(0, 1))
    board = grid_search(sweep, tiny, out_dir=tmp_path)
    assert len(board) == 4
    with open(tmp_path / "leaderboard.tsv") as fh:
        rows = list(csv.DictReader(fh, delimiter="\t"))
    resorted = sorted(rows, key=lambda r: -float(r["selection_mean"]))
    assert [r["config_hash"] for r in resorted] == [a.config_hash for a in board]


def test_sub_grid_second_stage(tiny):
    sweep = SweepConfig(BASE, lrs=(1e-3, 1e-4), batch_sizes=(16,), seeds=(0,), sub_grid=({"hidden_dims": (4,)},), top_k=1)
    board = grid_search(sweep, tiny)
    assert len(board) == 3
    assert sum(1 for a in board if list(a.config["model"]["hidden_dims"]) == [4]) == 1


def test_failed_runs_are_counted_not_fatal(tiny, caplog):
    bad = BASE.replace(main_task="nope")
    agg = seed_sweep(bad, tiny, seeds=(0, 1))
    assert agg.n_failed == 2 and agg.seeds == []
    board = grid_search(SweepConfig(bad, lrs=(1e-3,), batch_sizes=(16,), seeds=(0,)), tiny)
    assert board == []
    assert "failed" in caplog.text


def test_seed_sweep_parallel_matches_serial(tiny, monkeypatch):
    serial = seed_sweep(BASE, tiny, seeds=(0, 1))
    monkeypatch.setenv("WEAKMTL_WORKERS", "2")
    assert worker_count(1) == 2
    parallel = seed_sweep(BASE, tiny, seeds=(0, 1))
    assert parallel.result_hashes == serial.result_hashes


def test_training_labels():
    cfg = BASE.replace(main_task="emotion").to_dict()
    assert training_label(cfg) == "Emotion"
    cfg["aux_tasks"] = [{"task_id": "sentiment", "weight": 0.6, "provenance": "weak"}]
    assert training_label(cfg) == "+ Sentiment(W)"
    cfg["aux_tasks"] = [{"task_id": "sarcasm", "weight": 0.6, "provenance": "weak"}]
    assert training_label(cfg) == "+ Sarcasm(W)"
    cfg["aux_tasks"].append({"task_id": "sentiment", "weight": 0.3, "provenance": "weak"})
    assert training_label(cfg) == "All"


def _multilabel_agg(main, aux, values):
    cfg = BASE.replace(main_task=main, aux_tasks=tuple(TaskWeight(*a) for a in aux))
    results = []
    for seed, v in enumerate(values):
        per = {c: {"wacc": v, "f1": v - 0.1, "wf1": None, "accuracy": v, "counts": [0, 0, 0, 0]} for c in ("happy", "sad")}
        test = {main: {"task_id": main, "accuracy": None, "f1": None, "average": {"wacc": v, "f1": v - 0.1}, "per_class": per}}
        results.append(RunResult(seed, cfg.to_dict(), 0, v, [], [], [], test))
    return aggregate(results, cfg)


def test_report_tables_round_trip(tmp_path):
    rows = [
        ((), [0.70, 0.72]),
        ((("sentiment", 0.8, "weak"),), [0.71, 0.75]),
        ((("sarcasm", 0.5, "weak"),), [0.705, 0.731]),
        ((("sentiment", 0.8, "weak"), ("sarcasm", 0.5, "weak")), [0.69, 0.77]),
    ]
    aggs = [_multilabel_agg("emotion", aux, vals) for aux, vals in rows]
    table = report_table([ReportEntry("EF_LF_LSTM", a) for a in aggs], "mtl")
    parsed = parse_table(table)
    assert [r["Training Tasks"] for r in parsed] == ["Emotion", "+ Sentiment(W)", "+ Sarcasm(W)", "All"]
    for r, a in zip(parsed, aggs):
        cell = a.metrics["emotion/average/wacc"].cell()
        assert r["EF_LF_LSTM Avg.WAcc"] == tuple(float(x) for x in cell.split(" ± "))
    bench = report_table([ReportEntry("EF_LF_LSTM", aggs[0])], "benchmark")
    header = bench.splitlines()[0]
    assert header == "Model | happy WAcc | happy F1 | sad WAcc | sad F1 | Avg.WAcc | Avg.F1"
    assert parse_table(bench)[0]["Avg.WAcc"] == (71.0, 1.0)


def test_empty_report_is_header_only():
    assert report_table([], "benchmark").strip() == "Model"
    assert report_table([], "mtl").splitlines() == ["Target Task | Training Tasks"]
    with pytest.raises(ValueError):
        report_table([], "wide")


def test_aggregate_serialisation(tmp_path):
    agg = aggregate([fake_result(0, 0.5), fake_result(1, 0.7)], BASE)
    d = tmp_path / agg.config_hash
    d.mkdir()
    (d / "aggregate.json").write_text(json.dumps(agg.to_dict()))
    (back,) = load_aggregates(tmp_path)
    assert json.dumps(back.to_dict(), sort_keys=True) == json.dumps(agg.to_dict(), sort_keys=True)
    assert back.metrics["main/accuracy"].values == [0.5, 0.7]
