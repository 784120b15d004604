"""Synthetic multimodal datasets with correlated task labels.

Each sample has a latent vector ``z``. Task ``j`` reads ``z`` through a
projection ``M_j = rho * C + (1 - rho) * E_j`` where ``C`` is shared by all
tasks and ``E_j`` is task specific, so ``rho`` sets how strongly task labels
agree. Modality step ``i`` is ``A_m z + B_m u_i`` with ``u`` an AR(1) noise
sequence of unit stationary variance and ``B_m = noise_scale * I``.

The projections (the "world") are drawn from ``world_seed``, the samples from
``seed``; two datasets built with the same world but different sample seeds
behave like two corpora labelled under the same affect model.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import _accel
from ..datamodel import (
    DEFAULT_DIMS,
    SPLITS,
    Dataset,
    LabelSet,
    Provenance,
    Sample,
    TaskKind,
    TaskSpec,
)


@dataclass(frozen=True)
class SyntheticTask:
    task_id: str
    kind: str = "categorical"
    n_classes: int = 2

    def spec(self) -> TaskSpec:
        if self.kind == TaskKind.CATEGORICAL.value and self.n_classes == 2 and self.task_id == "sentiment":
            classes = ("negative", "positive")
        else:
            classes = tuple(f"c{i}" for i in range(self.n_classes))
        return TaskSpec(self.task_id, TaskKind(self.kind), classes)


@dataclass(frozen=True)
class SyntheticConfig:
    name: str = "synthetic"
    n_train: int = 200
    n_valid: int = 100
    n_test: int = 200
    seq_len: tuple[int, int] = (8, 16)
    dims: tuple[int, int, int] = DEFAULT_DIMS
    latent_dim: int = 8
    tasks: tuple[SyntheticTask, ...] = (SyntheticTask("main"), SyntheticTask("aux"))
    rho: float = 0.5
    eta: float = 0.0
    seed: int = 0
    world_seed: int | None = None
    signal_scale: float = 1.0
    noise_scale: float = 1.0
    ar_coef: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "seq_len", tuple(self.seq_len))
        object.__setattr__(self, "dims", tuple(self.dims))
        object.__setattr__(
            self, "tasks", tuple(t if isinstance(t, SyntheticTask) else SyntheticTask(**t) for t in self.tasks)
        )
        self.validate()

    def validate(self):
        s_min, s_max = self.seq_len
        if s_min < 1 or s_max < s_min:
            raise ValueError(f"invalid sequence length range {self.seq_len}")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")
        if not 0.0 <= self.eta < 0.5:
            raise ValueError(f"eta must lie in [0, 0.5), got {self.eta}")
        if min(self.n_train, self.n_valid, self.n_test) < 0:
            raise ValueError("split sizes must be non-negative")
        if self.latent_dim < 1 or min(self.dims) < 1:
            raise ValueError("latent_dim and feature dims must be positive")
        if not self.tasks:
            raise ValueError("at least one task is required")
        ids = [t.task_id for t in self.tasks]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate task ids {ids}")
        for t in self.tasks:
            if t.kind not in (TaskKind.CATEGORICAL.value, TaskKind.MULTILABEL.value):
                raise ValueError(f"unknown task kind {t.kind!r}")
            if t.n_classes < (2 if t.kind == TaskKind.CATEGORICAL.value else 1):
                raise ValueError(f"task {t.task_id!r} has too few classes")
        if self.noise_scale < 0 or self.signal_scale < 0:
            raise ValueError("scales must be non-negative")

    @property
    def sizes(self) -> dict[str, int]:
        return {"train": self.n_train, "valid": self.n_valid, "test": self.n_test}

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticConfig":
        d = dict(d)
        if "tasks" in d:
            d["tasks"] = tuple(SyntheticTask(**t) for t in d["tasks"])
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "SyntheticConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _unit_rows(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


@dataclass
class SyntheticWorld:
    """Projection matrices shared by every dataset drawn with one world seed."""

    latent_dim: int
    dims: tuple[int, int, int]
    rho: float
    task_projections: dict[str, np.ndarray]
    modality_loadings: tuple[np.ndarray, np.ndarray, np.ndarray]
    tasks: dict[str, TaskSpec] = field(default_factory=dict)

    @classmethod
    def from_config(cls, config: SyntheticConfig) -> "SyntheticWorld":
        seed = config.seed if config.world_seed is None else config.world_seed
        rng = np.random.default_rng([seed, 0x5EED])
        k = config.latent_dim
        max_classes = max(t.n_classes for t in config.tasks)
        common = _unit_rows(rng.standard_normal((max_classes, k)))
        projections = {}
        for t in config.tasks:
            own = _unit_rows(rng.standard_normal((t.n_classes, k)))
            projections[t.task_id] = config.rho * common[: t.n_classes] + (1.0 - config.rho) * own
        loadings = tuple(rng.standard_normal((d, k)) / np.sqrt(k) for d in config.dims)
        return cls(k, config.dims, config.rho, projections, loadings, {t.task_id: t.spec() for t in config.tasks})

    def clean_labels(self, task_id: str, z: np.ndarray) -> np.ndarray:
        """Noise-free decision rule: (n, d_y) 0/1 matrix for latents ``z`` of shape (n, k)."""
        spec = self.tasks[task_id]
        scores = np.atleast_2d(z) @ self.task_projections[task_id].T
        if spec.kind is TaskKind.MULTILABEL:
            return (scores > 0).astype(np.float64)
        idx = scores.argmax(axis=1)
        return np.eye(spec.output_dim)[idx]


def _corrupt(y: np.ndarray, kind: TaskKind, eta: float, rng: np.random.Generator) -> np.ndarray:
    if eta == 0.0:
        return y
    y = y.copy()
    if kind is TaskKind.MULTILABEL:
        flip = rng.random(y.shape) < eta
        y[flip] = 1.0 - y[flip]
        return y
    n, d = y.shape
    flip = rng.random(n) < eta
    shift = rng.integers(1, d, size=n)
    idx = y.argmax(axis=1)
    idx = np.where(flip, (idx + shift) % d, idx)
    return np.eye(d)[idx]


def generate_synthetic(config: SyntheticConfig, return_world: bool = False):
    """Draw a dataset from ``config``; deterministic given the seeds."""
    config.validate()
    world = SyntheticWorld.from_config(config)
    rng = np.random.default_rng([config.seed, 0xDA7A])
    k = config.latent_dim
    d_total = sum(config.dims)
    loadings = np.concatenate(world.modality_loadings, axis=0)
    innov_scale = np.sqrt(1.0 - config.ar_coef**2)
    bounds = np.cumsum((0,) + config.dims)

    samples: dict[str, Sample] = {}
    splits: dict[str, list[str]] = {}
    latents: list[np.ndarray] = []
    order: list[str] = []
    for split in SPLITS:
        ids = []
        for i in range(config.sizes[split]):
            sid = f"{split}-{i:05d}"
            s = int(rng.integers(config.seq_len[0], config.seq_len[1] + 1))
            z = rng.standard_normal(k)
            u = _accel.ar1(rng.standard_normal((s, d_total)) * innov_scale, config.ar_coef)
            feats = config.signal_scale * (loadings @ z)[None, :] + config.noise_scale * u
            feats = feats.astype(np.float32)
            parts = [feats[:, bounds[m] : bounds[m + 1]] for m in range(3)]
            samples[sid] = Sample.from_arrays(sid, *parts)
            ids.append(sid)
            latents.append(z)
            order.append(sid)
        splits[split] = ids

    z_all = np.array(latents).reshape(len(order), k)
    label_sets = []
    for t in config.tasks:
        spec = world.tasks[t.task_id]
        y = _corrupt(world.clean_labels(t.task_id, z_all), spec.kind, config.eta, rng)
        labels = {sid: y[i] for i, sid in enumerate(order)}
        label_sets.append(LabelSet(spec, Provenance.STRONG, labels, 1.0, None))

    dataset = Dataset(config.name, samples, splits, tuple(label_sets))
    if return_world:
        return dataset, world
    return dataset


def categorical_indices(label_set: LabelSet, sample_ids) -> np.ndarray:
    y, _ = label_set.matrix(sample_ids)
    return y.argmax(axis=1)


__all__ = [
    "SyntheticConfig",
    "SyntheticTask",
    "SyntheticWorld",
    "generate_synthetic",
    "categorical_indices",
]
