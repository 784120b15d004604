"""Evaluation metrics: weighted accuracy, F1, weighted F1, threshold sweeps, Pearson.

All arithmetic is float64. Metrics that are undefined on a split (no positive
or no negative examples) raise :class:`UndefinedMetricError` instead of
quietly returning zero.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _accel

logger = logging.getLogger(__name__)


class UndefinedMetricError(ValueError):
    pass


class UndefinedCorrelationError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError(f"confusion counts must be non-negative: {self}")

    @property
    def p(self) -> int:
        return self.tp + self.fn

    @property
    def n(self) -> int:
        return self.tn + self.fp

    @property
    def total(self) -> int:
        return self.p + self.n

    def swapped(self) -> "ConfusionCounts":
        """The same counts with the negative class treated as positive."""
        return ConfusionCounts(tp=self.tn, fp=self.fn, tn=self.tp, fn=self.fp)

    @classmethod
    def from_predictions(cls, pred, truth) -> "ConfusionCounts":
        tp, fp, tn, fn = (int(x) for x in _accel.confusion_counts(pred, truth))
        return cls(tp, fp, tn, fn)


def weighted_accuracy(c: ConfusionCounts) -> float:
    """``(TP * N/P + TN) / 2N``."""
    if c.p == 0 or c.n == 0:
        raise UndefinedMetricError(f"weighted accuracy needs P > 0 and N > 0 (P={c.p}, N={c.n})")
    p, n = float(c.p), float(c.n)
    return (c.tp * n / p + c.tn) / (2.0 * n)


def accuracy(c: ConfusionCounts) -> float:
    if c.total == 0:
        raise UndefinedMetricError("accuracy over zero samples")
    return (c.tp + c.tn) / float(c.total)


def f1(c: ConfusionCounts) -> float:
    denom = 2 * c.tp + c.fp + c.fn
    if denom == 0:
        return 0.0
    return 2.0 * c.tp / denom


def weighted_f1(c: ConfusionCounts) -> float:
    """Class-share weighted mean of positive-class and negative-class F1."""
    total = c.total
    if total == 0:
        raise UndefinedMetricError("weighted F1 over zero samples")
    return c.p / total * f1(c) + c.n / total * f1(c.swapped())


@dataclass(frozen=True)
class SweepPoint:
    threshold: float
    counts: ConfusionCounts
    wacc: float
    f1: float
    wf1: float


def threshold_sweep(scores, labels, thresholds) -> list[SweepPoint]:
    """Metrics at each threshold, classifying ``score >= tau`` as positive."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    thresholds = np.asarray(thresholds, dtype=np.float64).ravel()
    if scores.size == 0 or thresholds.size == 0:
        raise ValueError("threshold_sweep needs non-empty scores and thresholds")
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have equal length")
    if np.any(np.diff(thresholds) < 0):
        raise ValueError("thresholds must be sorted ascending")
    out = []
    for tau, row in zip(thresholds, _accel.sweep_counts(scores, labels, thresholds)):
        c = ConfusionCounts(*(int(x) for x in row))
        out.append(SweepPoint(float(tau), c, weighted_accuracy(c), f1(c), weighted_f1(c)))
    return out


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape or x.size < 2:
        raise ValueError("pearson needs two equal-length sequences of at least 2 values")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("pearson correlation is undefined for a constant sequence")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


@dataclass
class ClassMetrics:
    counts: ConfusionCounts
    wacc: float | None
    f1: float
    wf1: float | None
    accuracy: float


@dataclass
class TaskMetrics:
    task_id: str
    per_class: dict[str, ClassMetrics] = field(default_factory=dict)
    average: dict[str, float] = field(default_factory=dict)
    # categorical tasks report plain accuracy and positive-class F1
    accuracy: float | None = None
    f1: float | None = None

    def selection_value(self) -> float:
        """Average WAcc for multilabel tasks, accuracy otherwise."""
        if self.accuracy is not None:
            return self.accuracy
        return self.average.get("wacc", float("nan"))

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "accuracy": self.accuracy,
            "f1": self.f1,
            "average": dict(self.average),
            "per_class": {
                name: {
                    "wacc": m.wacc,
                    "f1": m.f1,
                    "wf1": m.wf1,
                    "accuracy": m.accuracy,
                    "counts": [m.counts.tp, m.counts.fp, m.counts.tn, m.counts.fn],
                }
                for name, m in self.per_class.items()
            },
        }


@dataclass
class MetricsReport:
    tasks: dict[str, TaskMetrics] = field(default_factory=dict)

    def __getitem__(self, task_id: str) -> TaskMetrics:
        return self.tasks[task_id]

    def to_dict(self) -> dict:
        return {k: v.to_dict() for k, v in self.tasks.items()}


def _class_metrics(counts: ConfusionCounts, name: str) -> ClassMetrics:
    try:
        wacc = weighted_accuracy(counts)
    except UndefinedMetricError:
        logger.warning("class %r has P=%d N=%d; WAcc undefined and excluded from the average", name, counts.p, counts.n)
        wacc = None
    wf1 = weighted_f1(counts) if counts.total else None
    acc = accuracy(counts) if counts.total else float("nan")
    return ClassMetrics(counts, wacc, f1(counts), wf1, acc)


def _mean_defined(values) -> float:
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else float("nan")


def evaluate_multilabel(logits, labels, class_threshold=0.5, classes=None, task_id="emotion") -> TaskMetrics:
    """One-vs-rest metrics per class; ``sigmoid(logit) >= threshold`` is positive."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if logits.shape != labels.shape or logits.ndim != 2:
        raise ValueError(f"logits and labels must share shape (B, d_y), got {logits.shape} and {labels.shape}")
    d_y = logits.shape[1]
    classes = list(classes) if classes is not None else [str(c) for c in range(d_y)]
    thresholds = np.broadcast_to(np.asarray(class_threshold, dtype=np.float64), (d_y,))
    probs = 0.5 * (1.0 + np.tanh(0.5 * logits))
    out = TaskMetrics(task_id)
    for c, name in enumerate(classes):
        counts = ConfusionCounts.from_predictions(probs[:, c] >= thresholds[c], labels[:, c] >= 0.5)
        out.per_class[name] = _class_metrics(counts, name)
    out.average = {
        "wacc": _mean_defined(m.wacc for m in out.per_class.values()),
        "f1": _mean_defined(m.f1 for m in out.per_class.values()),
        "wf1": _mean_defined(m.wf1 for m in out.per_class.values()),
        "accuracy": _mean_defined(m.accuracy for m in out.per_class.values()),
    }
    return out


def evaluate_categorical(logits, targets, classes=None, task_id="sentiment") -> TaskMetrics:
    """Plain accuracy plus per-class one-vs-rest metrics for argmax predictions.

    ``targets`` are class indices. The headline F1 is the positive-class
    (last class) F1, matching the binary sentiment/sarcasm convention.
    """
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64).ravel()
    if logits.ndim != 2 or logits.shape[0] != targets.shape[0]:
        raise ValueError("logits must be (B, d_y) with one target per row")
    d_y = logits.shape[1]
    classes = list(classes) if classes is not None else [str(c) for c in range(d_y)]
    pred = logits.argmax(axis=1)
    out = TaskMetrics(task_id)
    for c, name in enumerate(classes):
        counts = ConfusionCounts.from_predictions(pred == c, targets == c)
        out.per_class[name] = _class_metrics(counts, name)
    out.accuracy = float(np.mean(pred == targets)) if targets.size else float("nan")
    out.f1 = out.per_class[classes[-1]].f1
    out.average = {
        "wacc": _mean_defined(m.wacc for m in out.per_class.values()),
        "f1": _mean_defined(m.f1 for m in out.per_class.values()),
        "accuracy": out.accuracy,
    }
    return out


def correlation_matrix(columns: dict[str, np.ndarray]) -> dict[str, dict[str, float | None]]:
    """Pairwise Pearson correlations; ``None`` where a column is constant."""
    names = list(columns)
    out: dict[str, dict[str, float | None]] = {}
    for a in names:
        out[a] = {}
        for b in names:
            try:
                out[a][b] = pearson(columns[a], columns[b])
            except UndefinedCorrelationError:
                out[a][b] = None
    return out
