import numpy as np
import pytest

from conftest import tiny_config
from weakmtl.datamodel import (
    Dataset,
    DuplicateLabelSetError,
    LabelSet,
    MissingLabelError,
    Provenance,
    Sample,
    TaskSpec,
    emotion_task,
    sarcasm_task,
    sentiment_task,
    split_stats,
    validate_dataset,
)
from weakmtl.ingest import generate_synthetic


def _sample(sid, lengths=(3, 3, 3), dims=(2, 2, 2)):
    rng = np.random.default_rng(0)
    return Sample.from_arrays(sid, *(rng.normal(size=(n, d)) for n, d in zip(lengths, dims)))


def test_clean_synthetic_dataset_validates(tiny):
    assert validate_dataset(tiny) == []


def test_unequal_lengths_reported():
    ds = Dataset("x", {"a": _sample("a", (7, 5, 7))}, {"train": ("a",)})
    problems = validate_dataset(ds)
    assert [p.rule for p in problems] == ["unequal modality lengths"]


def test_strong_confidence_must_be_one():
    task = sentiment_task()
    ls = LabelSet(task, Provenance.STRONG, {"a": np.array([1.0, 0.0])}, confidence=0.8)
    ds = Dataset("x", {"a": _sample("a")}, {"train": ("a",)}, (ls,))
    assert [p.rule for p in validate_dataset(ds)] == ["strong label confidence must be 1.0"]


def test_non_finite_rows_and_overlapping_splits():
    s = _sample("a")
    s.text.features[1, 0] = np.nan
    ds = Dataset("x", {"a": s, "b": _sample("b")}, {"train": ("a", "b"), "test": ("b",)})
    rules = {p.rule for p in validate_dataset(ds)}
    assert rules == {"non-finite feature row", "overlapping splits"}


def test_task_specs():
    assert emotion_task().output_dim == 4
    assert sentiment_task().kind.value == "categorical"
    assert sarcasm_task().loss.value == "cross_entropy"
    assert emotion_task().loss.value == "weighted_binary_cross_entropy"
    assert TaskSpec.from_dict(emotion_task().to_dict()) == emotion_task()
    with pytest.raises(ValueError):
        TaskSpec("t", "categorical", ("only",))


def test_label_set_lookup_prefers_strong(tiny):
    strong = tiny.label_set("main")
    weak = LabelSet(strong.task, Provenance.WEAK, dict(strong.labels), 0.7, "lab")
    ds = tiny.with_label_set(weak)
    assert ds.label_set("main").provenance is Provenance.STRONG
    assert ds.label_set("main", "weak") is weak
    with pytest.raises(DuplicateLabelSetError):
        ds.with_label_set(weak)
    with pytest.raises(MissingLabelError):
        ds.label_set("nope")


def test_split_stats_recount(tiny):
    ls = tiny.label_set("main")
    table = split_stats(tiny, "main")
    for split, ids in tiny.splits.items():
        manual = {c: 0 for c in ls.task.classes}
        for sid in ids:
            manual[ls.task.classes[int(np.argmax(ls.labels[sid]))]] += 1
        assert table[split] == manual
        assert sum(table[split].values()) == len(ids)


def test_split_stats_hundred_samples_multilabel():
    ds = generate_synthetic(tiny_config(n_train=60, n_valid=20, n_test=20))
    ls = ds.label_set("aux")
    table = split_stats(ds, "aux")
    for split, ids in ds.splits.items():
        for i, c in enumerate(ls.task.classes):
            assert table[split][c] == sum(int(ls.labels[sid][i] >= 0.5) for sid in ids)


def test_split_stats_empty_dataset():
    task = emotion_task()
    table = split_stats(Dataset("empty", {}, {}), task)
    assert all(v == 0 for row in table.values() for v in row.values())
