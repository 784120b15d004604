"""Dataset, sample, task and label abstractions shared across the package.

Labels never live on a :class:`Sample`. A :class:`Dataset` carries any number
of :class:`LabelSet` objects, so strong and weak labels for the same samples
can coexist.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

SPLITS = ("train", "valid", "test")
MODALITIES = ("text", "audio", "video")

# text: GloVe, audio: COVAREP, video: facial action units
DEFAULT_DIMS = (300, 74, 35)


class Modality(str, enum.Enum):
    TEXT = "text"
    AUDIO = "audio"
    VIDEO = "video"


class TaskKind(str, enum.Enum):
    MULTILABEL = "multilabel"
    CATEGORICAL = "categorical"


class LossKind(str, enum.Enum):
    WEIGHTED_BCE = "weighted_binary_cross_entropy"
    CROSS_ENTROPY = "cross_entropy"


class Provenance(str, enum.Enum):
    STRONG = "strong"
    WEAK = "weak"


class MissingLabelError(KeyError):
    """Raised when a dataset carries no label set for a requested task."""


class DuplicateLabelSetError(ValueError):
    """Raised when attaching a second label set with the same (task, provenance)."""


@dataclass(frozen=True)
class ModalitySequence:
    modality: Modality
    features: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "modality", Modality(self.modality))
        if self.features.ndim != 2:
            raise ValueError(f"{self.modality.value} features must be 2-D, got shape {self.features.shape}")

    @property
    def length(self) -> int:
        return int(self.features.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])


@dataclass(frozen=True)
class Sample:
    sample_id: str
    text: ModalitySequence
    audio: ModalitySequence
    video: ModalitySequence
    metadata: Mapping[str, float] = field(default_factory=dict)

    @classmethod
    def from_arrays(cls, sample_id: str, text, audio, video, metadata=None) -> "Sample":
        return cls(
            sample_id,
            ModalitySequence(Modality.TEXT, np.asarray(text)),
            ModalitySequence(Modality.AUDIO, np.asarray(audio)),
            ModalitySequence(Modality.VIDEO, np.asarray(video)),
            dict(metadata or {}),
        )

    @property
    def length(self) -> int:
        return self.text.length

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.text.dim, self.audio.dim, self.video.dim)

    def modalities(self) -> tuple[ModalitySequence, ModalitySequence, ModalitySequence]:
        return (self.text, self.audio, self.video)


@dataclass(frozen=True)
class TaskSpec:
    """Identity and output space of one task.

    ``output_dim`` is the head width d_y. Multilabel tasks (emotion) train with
    weighted binary cross-entropy, categorical tasks (sentiment, sarcasm)
    with cross-entropy.
    """

    task_id: str
    kind: TaskKind
    classes: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "kind", TaskKind(self.kind))
        object.__setattr__(self, "classes", tuple(self.classes))
        if not self.task_id:
            raise ValueError("task_id must be non-empty")
        if len(set(self.classes)) != len(self.classes):
            raise ValueError(f"duplicate class names in task {self.task_id!r}")
        if self.kind is TaskKind.CATEGORICAL and len(self.classes) < 2:
            raise ValueError("categorical tasks need at least two classes")
        if self.kind is TaskKind.MULTILABEL and len(self.classes) < 1:
            raise ValueError("multilabel tasks need at least one class")

    @property
    def output_dim(self) -> int:
        return len(self.classes)

    @property
    def loss(self) -> LossKind:
        if self.kind is TaskKind.MULTILABEL:
            return LossKind.WEIGHTED_BCE
        return LossKind.CROSS_ENTROPY

    def to_dict(self) -> dict:
        return {"task_id": self.task_id, "kind": self.kind.value, "classes": list(self.classes)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "TaskSpec":
        return cls(d["task_id"], TaskKind(d["kind"]), tuple(d["classes"]))


def emotion_task(classes=("neutral", "happy", "sad", "angry"), task_id="emotion") -> TaskSpec:
    return TaskSpec(task_id, TaskKind.MULTILABEL, tuple(classes))


def sentiment_task(task_id="sentiment") -> TaskSpec:
    return TaskSpec(task_id, TaskKind.CATEGORICAL, ("negative", "positive"))


def sarcasm_task(task_id="sarcasm") -> TaskSpec:
    return TaskSpec(task_id, TaskKind.CATEGORICAL, ("not_sarcastic", "sarcastic"))


@dataclass(frozen=True)
class LabelSet:
    """Labels for one task over (a subset of) a dataset's samples.

    Multilabel vectors are stored as 0/1 float arrays of length d_y,
    categorical labels as class-probability rows (one-hot for hard labels).
    """

    task: TaskSpec
    provenance: Provenance
    labels: Mapping[str, np.ndarray]
    confidence: float = 1.0
    source: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "provenance", Provenance(self.provenance))

    @property
    def key(self) -> tuple[str, str]:
        return (self.task.task_id, self.provenance.value)

    def matrix(self, sample_ids: Iterable[str]) -> tuple[np.ndarray, np.ndarray]:
        """Stack labels for ``sample_ids``; returns (labels (n, d_y), present (n,))."""
        ids = list(sample_ids)
        out = np.zeros((len(ids), self.task.output_dim), dtype=np.float64)
        present = np.zeros(len(ids), dtype=bool)
        for i, sid in enumerate(ids):
            y = self.labels.get(sid)
            if y is not None:
                out[i] = y
                present[i] = True
        return out, present


def one_hot(index: int, n: int) -> np.ndarray:
    y = np.zeros(n, dtype=np.float64)
    y[index] = 1.0
    return y


@dataclass(frozen=True)
class Dataset:
    name: str
    samples: Mapping[str, Sample]
    splits: Mapping[str, tuple[str, ...]]
    label_sets: tuple[LabelSet, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "splits", {k: tuple(v) for k, v in self.splits.items()})
        object.__setattr__(self, "label_sets", tuple(self.label_sets))

    @property
    def dims(self) -> tuple[int, int, int] | None:
        for s in self.samples.values():
            return s.dims
        return None

    def split(self, name: str) -> list[Sample]:
        return [self.samples[sid] for sid in self.splits.get(name, ())]

    def label_set(self, task_id: str, provenance: Provenance | str | None = None) -> LabelSet:
        """Find the label set for ``task_id``; strong wins when provenance is not given."""
        candidates = [ls for ls in self.label_sets if ls.task.task_id == task_id]
        if provenance is not None:
            candidates = [ls for ls in candidates if ls.provenance is Provenance(provenance)]
        if not candidates:
            raise MissingLabelError(f"dataset {self.name!r} has no labels for task {task_id!r}")
        candidates.sort(key=lambda ls: ls.provenance is not Provenance.STRONG)
        return candidates[0]

    def with_label_set(self, label_set: LabelSet) -> "Dataset":
        """Return a copy with ``label_set`` attached; duplicates are rejected."""
        if any(ls.key == label_set.key for ls in self.label_sets):
            raise DuplicateLabelSetError(f"label set {label_set.key} already attached to {self.name!r}")
        return dataclasses.replace(self, label_sets=self.label_sets + (label_set,))

    def without_label_set(self, task_id: str, provenance: Provenance | str) -> "Dataset":
        key = (task_id, Provenance(provenance).value)
        return dataclasses.replace(self, label_sets=tuple(ls for ls in self.label_sets if ls.key != key))

    def with_splits(self, splits: Mapping[str, Iterable[str]]) -> "Dataset":
        return dataclasses.replace(self, splits={k: tuple(v) for k, v in splits.items()})


@dataclass(frozen=True)
class Violation:
    rule: str
    sample_id: str | None = None
    detail: str = ""

    def __str__(self):
        where = f" [{self.sample_id}]" if self.sample_id else ""
        return f"{self.rule}{where}: {self.detail}" if self.detail else f"{self.rule}{where}"


def validate_dataset(dataset: Dataset) -> list[Violation]:
    """Collect every invariant violation; an empty list means the dataset is valid."""
    out: list[Violation] = []
    dims = None
    for sid, sample in dataset.samples.items():
        if sid != sample.sample_id:
            out.append(Violation("sample id mismatch", sid, f"keyed as {sid!r}, sample says {sample.sample_id!r}"))
        lengths = {m.modality.value: m.length for m in sample.modalities()}
        if len(set(lengths.values())) != 1:
            out.append(Violation("unequal modality lengths", sid, str(lengths)))
        if sample.length < 1:
            out.append(Violation("empty sequence", sid))
        for m in sample.modalities():
            bad_rows = ~np.isfinite(m.features).all(axis=1) if m.length else np.zeros(0, bool)
            if bad_rows.any():
                out.append(Violation("non-finite feature row", sid, f"{m.modality.value} rows {np.flatnonzero(bad_rows).tolist()}"))
        if dims is None:
            dims = sample.dims
        elif sample.dims != dims:
            out.append(Violation("inconsistent feature dims", sid, f"{sample.dims} vs {dims}"))

    seen: dict[str, str] = {}
    for split, ids in dataset.splits.items():
        if split not in SPLITS:
            out.append(Violation("unknown split", None, split))
        for sid in ids:
            if sid not in dataset.samples:
                out.append(Violation("split references unknown sample", sid, split))
            if sid in seen:
                out.append(Violation("overlapping splits", sid, f"{seen[sid]} and {split}"))
            seen.setdefault(sid, split)

    keys = set()
    for ls in dataset.label_sets:
        if ls.key in keys:
            out.append(Violation("duplicate label set", None, str(ls.key)))
        keys.add(ls.key)
        if ls.provenance is Provenance.STRONG and ls.confidence != 1.0:
            out.append(Violation("strong label confidence must be 1.0", None, f"{ls.task.task_id}: {ls.confidence}"))
        if not 0.0 <= ls.confidence <= 1.0:
            out.append(Violation("confidence out of range", None, f"{ls.task.task_id}: {ls.confidence}"))
        if ls.provenance is Provenance.WEAK and not ls.source:
            out.append(Violation("weak label set without source", None, ls.task.task_id))
        for sid, y in ls.labels.items():
            if sid not in dataset.samples:
                out.append(Violation("label references unknown sample", sid, ls.task.task_id))
            elif np.shape(y) != (ls.task.output_dim,):
                out.append(Violation("label dimension mismatch", sid, f"{ls.task.task_id}: {np.shape(y)}"))
    return out


def split_stats(dataset: Dataset, task: TaskSpec | str, provenance=None) -> dict[str, dict[str, int]]:
    """Per-class positive counts per split, one row per split.

    Multilabel samples count once per positive class; categorical samples count
    for their argmax class.
    """
    task_id = task if isinstance(task, str) else task.task_id
    try:
        ls = dataset.label_set(task_id, provenance)
    except MissingLabelError:
        if isinstance(task, str):
            raise
        # nothing labelled yet: vacuous all-zero table
        return {split: {c: 0 for c in task.classes} for split in SPLITS}
    table = {split: {c: 0 for c in ls.task.classes} for split in SPLITS}
    for split in SPLITS:
        ids = dataset.splits.get(split, ())
        if not ids:
            continue
        y, present = ls.matrix(ids)
        y = y[present]
        if ls.task.kind is TaskKind.MULTILABEL:
            counts = (y >= 0.5).sum(axis=0)
        else:
            counts = np.bincount(y.argmax(axis=1), minlength=ls.task.output_dim)
        for c, n in zip(ls.task.classes, counts):
            table[split][c] = int(n)
    return table
