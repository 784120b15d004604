"""Weak label acquisition.

A labeler is trained on a source dataset that has strong labels for a task,
its test-split accuracy is stored as a confidence score, and its predictions
on a target dataset become a weak :class:`LabelSet` for that task.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .backbones import ModelConfig, MultiTaskModel, load_checkpoint, save_checkpoint
from .datamodel import Dataset, LabelSet, Provenance, TaskKind, TaskSpec
from .trainer import RunConfig, predict, split_arrays, train

logger = logging.getLogger(__name__)

LABELER_FILE = "labeler.json"

# dedicated weak labeler: hybrid fusion with BiLSTM encoders
DEFAULT_LABELER_CONFIG = ModelConfig(encoder="bilstm", fusion="hybrid", dropout=0.1)


class LabelerMismatchError(ValueError):
    pass


def model_hash(config: ModelConfig, tasks) -> str:
    payload = {"model": config.to_dict(), "tasks": [t.to_dict() for t in tasks]}
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class LabelerArtifact:
    source_dataset: str
    task: TaskSpec
    confidence: float
    config_hash: str
    checkpoint: str | None = None
    metadata: dict = field(default_factory=dict)
    model: MultiTaskModel | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"labeler confidence must lie in [0, 1], got {self.confidence}")

    @property
    def identity(self) -> str:
        return f"{self.source_dataset}/{self.task.task_id}@{self.config_hash}"

    def load_model(self) -> MultiTaskModel:
        if self.model is not None:
            model = self.model
        elif self.checkpoint is not None:
            model, _ = load_checkpoint(self.checkpoint)
        else:
            raise LabelerMismatchError("labeler has neither a model nor a checkpoint")
        if model_hash(model.config, model.tasks.values()) != self.config_hash:
            raise LabelerMismatchError(f"checkpoint does not match labeler config hash {self.config_hash}")
        if self.task.task_id not in model.tasks:
            raise LabelerMismatchError(f"labeler model has no head for task {self.task.task_id!r}")
        return model

    def save(self, directory) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        if self.model is not None and self.checkpoint is None:
            self.checkpoint = str(save_checkpoint(self.model, directory / "checkpoint.npz"))
        meta = {
            "source_dataset": self.source_dataset,
            "task": self.task.to_dict(),
            "confidence": self.confidence,
            "config_hash": self.config_hash,
            "checkpoint": Path(self.checkpoint).name if self.checkpoint else None,
            "metadata": self.metadata,
        }
        (directory / LABELER_FILE).write_text(json.dumps(meta, indent=1, sort_keys=True))
        return directory

    @classmethod
    def load(cls, directory) -> "LabelerArtifact":
        directory = Path(directory)
        if directory.is_file():
            directory = directory.parent
        meta = json.loads((directory / LABELER_FILE).read_text())
        ckpt = str(directory / meta["checkpoint"]) if meta.get("checkpoint") else None
        return cls(
            meta["source_dataset"],
            TaskSpec.from_dict(meta["task"]),
            float(meta["confidence"]),
            meta["config_hash"],
            ckpt,
            meta.get("metadata", {}),
        )


def _accuracy(test: dict, task: TaskSpec) -> float:
    if task.kind is TaskKind.MULTILABEL:
        return float(test["average"]["accuracy"])
    return float(test["accuracy"])


def train_labeler(source: Dataset, task: TaskSpec | str, config: ModelConfig | None = None, out_dir=None, **run_options) -> LabelerArtifact:
    """Train a single-task model on ``source`` and record its test accuracy as confidence."""
    task_id = task if isinstance(task, str) else task.task_id
    strong = source.label_set(task_id, Provenance.STRONG)
    config = config or DEFAULT_LABELER_CONFIG
    run = RunConfig(model=config, main_task=task_id, **run_options)
    result = train(run, source, out_dir=out_dir)
    if task_id not in result.test:
        raise ValueError(f"source dataset {source.name!r} has no labelled test samples for {task_id!r}")
    confidence = _accuracy(result.test[task_id], strong.task)
    model = result._model
    artifact = LabelerArtifact(
        source_dataset=source.name,
        task=strong.task,
        confidence=confidence,
        config_hash=model_hash(model.config, model.tasks.values()),
        checkpoint=result.checkpoint,
        metadata={"seed": run.seed, "run_config_hash": run.config_hash(), "confidence_split": "test"},
        model=model,
    )
    if out_dir is not None:
        artifact.save(out_dir)
    return artifact


def acquire_weak_labels(labeler: LabelerArtifact, target: Dataset, soft: bool = False, batch_size: int = 256) -> LabelSet:
    """Label every sample of ``target`` with the labeler's predictions.

    Hard labels by default: argmax one-hot for categorical tasks, per-class
    ``sigmoid >= 0.5`` for multilabel tasks. ``soft=True`` keeps probabilities.
    """
    model = labeler.load_model()
    dims = target.dims
    if dims is not None and tuple(dims) != tuple(model.config.input_dims):
        raise LabelerMismatchError(f"target dims {dims} differ from labeler input dims {model.config.input_dims}")
    task_id = labeler.task.task_id
    ids = list(target.samples)
    labels: dict[str, np.ndarray] = {}
    if ids:
        dtype = next(model.parameters()).dtype
        arrays = split_arrays(target, ids, {}, dtype)
        logits = predict(model, arrays, batch_size)[task_id].to(torch.float64)
        if labeler.task.kind is TaskKind.MULTILABEL:
            probs = torch.sigmoid(logits).numpy()
            y = probs if soft else (probs >= 0.5).astype(np.float64)
        else:
            probs = torch.softmax(logits, dim=-1).numpy()
            y = probs if soft else np.eye(labeler.task.output_dim)[probs.argmax(axis=1)]
        labels = {sid: y[i].copy() for i, sid in enumerate(ids)}
    return LabelSet(labeler.task, Provenance.WEAK, labels, labeler.confidence, labeler.identity)


def binarize_sentiment(score: float) -> str:
    """Two-class sentiment: strictly positive scores are positive, zero is negative."""
    return "positive" if score > 0 else "negative"


def sentiment_label_set(scores: dict[str, float], task: TaskSpec | None = None) -> LabelSet:
    from .datamodel import sentiment_task

    task = task or sentiment_task()
    labels = {}
    for sid, s in scores.items():
        y = np.zeros(2)
        y[1 if binarize_sentiment(s) == "positive" else 0] = 1.0
        labels[sid] = y
    return LabelSet(task, Provenance.STRONG, labels)
