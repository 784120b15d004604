"""Multi-task objective, losses, Adam, and single-run training/evaluation."""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import torch

from . import metrics as M
from .backbones import MultiTaskModel, ModelConfig, build_model, load_checkpoint, parameter_checksum, save_checkpoint
from .datamodel import Dataset, LabelSet, Provenance, TaskKind, TaskSpec, validate_dataset
from .ingest.batching import pad_and_mask

logger = logging.getLogger(__name__)

BETAS = (0.9, 0.999)
EPS = 1e-8
WEIGHT_DECAY = 1e-5
POS_WEIGHT_RANGE = (1.0, 20.0)


class AbortedRunError(RuntimeError):
    """Training produced a non-finite loss or gradient."""


class LabelError(ValueError):
    pass


# losses


def weighted_bce_loss(logits: torch.Tensor, labels: torch.Tensor, pos_weight=None, soft: bool = False) -> torch.Tensor:
    """Mean of ``-[w_c y log s(x) + (1 - y) log(1 - s(x))]`` over batch and classes."""
    if not soft and not bool(((labels == 0) | (labels == 1)).all()):
        raise LabelError("weighted BCE expects 0/1 labels")
    if pos_weight is None:
        pos_weight = torch.ones(logits.shape[-1], dtype=logits.dtype)
    pos_weight = torch.as_tensor(pos_weight, dtype=logits.dtype)
    if bool((pos_weight < 1).any()):
        raise ValueError("pos_weight must be >= 1")
    labels = labels.to(logits.dtype)
    # -log s(x) = softplus(-x), -log(1 - s(x)) = softplus(x)
    per = pos_weight * labels * torch.nn.functional.softplus(-logits) + (1 - labels) * torch.nn.functional.softplus(logits)
    return per.mean()


def ce_loss(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Mean negative log-softmax of the target class.

    ``targets`` holds class indices (B,) or, for soft weak labels, class
    probabilities (B, d_y).
    """
    logp = torch.log_softmax(logits, dim=-1)
    if targets.ndim == 2:
        return -(targets.to(logits.dtype) * logp).sum(dim=-1).mean()
    targets = targets.to(torch.int64)
    if targets.numel() and (int(targets.min()) < 0 or int(targets.max()) >= logits.shape[-1]):
        raise LabelError(f"class index out of range for d_y={logits.shape[-1]}")
    return -logp.gather(1, targets.unsqueeze(1)).mean()


def task_loss(task: TaskSpec, logits, targets, pos_weight=None, soft=False) -> torch.Tensor:
    if task.kind is TaskKind.MULTILABEL:
        return weighted_bce_loss(logits, targets, pos_weight, soft=soft)
    if soft:
        return ce_loss(logits, targets)
    return ce_loss(logits, targets.argmax(dim=-1) if targets.ndim == 2 else targets)


def multitask_loss(
    outputs: Mapping[str, torch.Tensor],
    targets: Mapping[str, torch.Tensor],
    weights: Mapping[str, float],
    tasks: Mapping[str, TaskSpec],
    present: Mapping[str, torch.Tensor] | None = None,
    pos_weights: Mapping[str, torch.Tensor] | None = None,
    soft: Mapping[str, bool] | None = None,
) -> torch.Tensor:
    """``sum_j lambda_j * L_j`` with each ``L_j`` averaged over the samples labelled for task ``j``.

    Zero-weight tasks are skipped outright, so adding them never changes the
    value or its gradient.
    """
    if not weights:
        raise ValueError("multitask_loss needs at least one task")
    if set(weights) - set(outputs) or set(weights) - set(targets):
        raise KeyError(f"tasks {sorted(weights)} must all have outputs and targets")
    total = None
    for task_id, lam in weights.items():
        if lam < 0:
            raise ValueError(f"loss weight for {task_id!r} is negative")
        if lam == 0:
            continue
        logits, y = outputs[task_id], targets[task_id]
        if present is not None and task_id in present:
            keep = present[task_id]
            if not bool(keep.any()):
                logger.debug("batch has no labelled samples for task %r; it contributes 0", task_id)
                continue
            if not bool(keep.all()):
                logits, y = logits[keep], y[keep]
        pw = None if pos_weights is None else pos_weights.get(task_id)
        term = lam * task_loss(tasks[task_id], logits, y, pw, bool(soft and soft.get(task_id)))
        total = term if total is None else total + term
    if total is None:
        some = next(iter(outputs.values()))
        return some.sum() * 0.0
    return total


# optimizer


@dataclass
class AdamState:
    step: int = 0
    m: list[torch.Tensor] = field(default_factory=list)
    v: list[torch.Tensor] = field(default_factory=list)


@torch.no_grad()
def adam_step(params, grads, state: AdamState, lr: float, betas=BETAS, eps=EPS, weight_decay=WEIGHT_DECAY) -> AdamState:
    """One bias-corrected Adam update, in place.

    Weight decay is the classic L2 form: ``weight_decay * p`` is added to the
    gradient before the moment updates.
    """
    params = list(params)
    grads = list(grads)
    if not state.m:
        state.m = [torch.zeros_like(p) for p in params]
        state.v = [torch.zeros_like(p) for p in params]
    for g in grads:
        if g is not None and not bool(torch.isfinite(g).all()):
            raise AbortedRunError("non-finite gradient")
    state.step += 1
    b1, b2 = betas
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = torch.zeros_like(p)
        if weight_decay:
            g = g + weight_decay * p
        m.mul_(b1).add_(g, alpha=1.0 - b1)
        v.mul_(b2).addcmul_(g, g, value=1.0 - b2)
        denom = (v / bc2).sqrt_().add_(eps)
        p.addcdiv_(m, denom, value=-lr / bc1)
    return state


# run configuration


@dataclass(frozen=True)
class TaskWeight:
    task_id: str
    weight: float = 1.0
    provenance: str = "strong"

    def __post_init__(self):
        object.__setattr__(self, "provenance", Provenance(self.provenance).value)


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig
    main_task: str
    aux_tasks: tuple[TaskWeight, ...] = ()
    main_weight: float = 1.0
    lambda_mode: str = "manual"
    lr: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 50
    seed: int = 0
    weight_decay: float = WEIGHT_DECAY
    valid_fraction: float = 0.1
    soft_labels: bool = False
    dtype: str = "float32"

    def __post_init__(self):
        if isinstance(self.model, Mapping):
            object.__setattr__(self, "model", ModelConfig.from_dict(self.model))
        object.__setattr__(
            self, "aux_tasks", tuple(t if isinstance(t, TaskWeight) else TaskWeight(**t) for t in self.aux_tasks)
        )
        if self.lambda_mode not in ("manual", "confidence"):
            raise ValueError(f"unknown lambda mode {self.lambda_mode!r}")
        for t in self.aux_tasks:
            if not 0.0 <= t.weight <= 1.0:
                raise ValueError(f"aux weight for {t.task_id!r} must lie in [0, 1]")
            if t.task_id == self.main_task:
                raise ValueError("the main task cannot also be an auxiliary task")
        if self.batch_size < 1 or self.max_epochs < 1 or self.lr <= 0:
            raise ValueError("batch_size, max_epochs and lr must be positive")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["model"] = self.model.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "RunConfig":
        d = dict(d)
        d["model"] = ModelConfig.from_dict(d["model"])
        d["aux_tasks"] = tuple(TaskWeight(**t) for t in d.get("aux_tasks", ()))
        return cls(**d)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class RunResult:
    seed: int
    config: dict
    best_epoch: int
    selection_value: float
    train_loss: list[float]
    valid_loss: list[float]
    valid_selection: list[float]
    test: dict
    checksums: list[str] = field(default_factory=list)
    checkpoint: str | None = None
    wall_time: float = 0.0
    confidence: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "RunResult":
        return cls(**dict(d))

    def content_hash(self) -> str:
        """Hash of everything except wall time and checkpoint location."""
        d = self.to_dict()
        d.pop("wall_time")
        d.pop("checkpoint")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    def test_value(self, task_id: str, key: str = "selection") -> float:
        t = self.test[task_id]
        if key == "selection":
            return t["accuracy"] if t["accuracy"] is not None else t["average"]["wacc"]
        if key in ("accuracy", "f1") and t.get(key) is not None:
            return t[key]
        return t["average"][key]


# data plumbing


@dataclass
class SplitArrays:
    sample_ids: list[str]
    text: torch.Tensor
    audio: torch.Tensor
    video: torch.Tensor
    mask: torch.Tensor
    lengths: np.ndarray
    targets: dict[str, torch.Tensor]
    present: dict[str, torch.Tensor]

    def __len__(self):
        return len(self.sample_ids)

    def batch(self, idx: np.ndarray):
        idx_t = torch.as_tensor(idx, dtype=torch.int64)
        s = int(self.lengths[idx].max())
        return (
            self.text[idx_t, :s],
            self.audio[idx_t, :s],
            self.video[idx_t, :s],
            self.mask[idx_t, :s],
            {k: v[idx_t] for k, v in self.targets.items()},
            {k: v[idx_t] for k, v in self.present.items()},
        )


def split_arrays(dataset: Dataset, sample_ids: Sequence[str], label_sets: Mapping[str, LabelSet], dtype=torch.float32) -> SplitArrays:
    ids = list(sample_ids)
    if not ids:
        raise ValueError("empty split")
    batch = pad_and_mask([dataset.samples[sid] for sid in ids])
    targets, present = {}, {}
    for task_id, ls in label_sets.items():
        y, ok = ls.matrix(ids)
        targets[task_id] = torch.from_numpy(y)
        present[task_id] = torch.from_numpy(ok)
    return SplitArrays(
        ids,
        torch.from_numpy(batch.text).to(dtype),
        torch.from_numpy(batch.audio).to(dtype),
        torch.from_numpy(batch.video).to(dtype),
        torch.from_numpy(batch.mask).bool(),
        batch.lengths,
        targets,
        present,
    )


def resolve_splits(dataset: Dataset, seed: int, valid_fraction: float = 0.1) -> dict[str, list[str]]:
    """Train/valid/test ids; without a valid split, hold out a seeded fraction of train."""
    train = list(dataset.splits.get("train", ()))
    valid = list(dataset.splits.get("valid", ()))
    test = list(dataset.splits.get("test", ()))
    if not train:
        raise ValueError(f"dataset {dataset.name!r} has no train split")
    if not valid:
        rng = np.random.default_rng([seed, 0xA11D])
        n_hold = max(1, int(round(valid_fraction * len(train))))
        held = set(rng.permutation(len(train))[:n_hold].tolist())
        valid = [sid for i, sid in enumerate(train) if i in held]
        train = [sid for i, sid in enumerate(train) if i not in held]
        logger.info("no valid split in %r; held out %d train samples for selection", dataset.name, len(valid))
    return {"train": train, "valid": valid, "test": test}


def positive_weights(targets: torch.Tensor, present: torch.Tensor) -> torch.Tensor:
    """``clamp(N_c / P_c, 1, 20)`` per class over labelled samples."""
    y = targets[present]
    pos = y.sum(dim=0)
    neg = y.shape[0] - pos
    ratio = torch.where(pos > 0, neg / pos.clamp(min=1e-12), torch.full_like(pos, POS_WEIGHT_RANGE[1]))
    return ratio.clamp(*POS_WEIGHT_RANGE)


def _task_label_sets(run: RunConfig, data: Dataset) -> tuple[dict[str, LabelSet], dict[str, float]]:
    sets = {run.main_task: data.label_set(run.main_task, Provenance.STRONG)}
    weights = {run.main_task: run.main_weight}
    for aux in run.aux_tasks:
        ls = data.label_set(aux.task_id, aux.provenance)
        sets[aux.task_id] = ls
        if run.lambda_mode == "confidence":
            weights[aux.task_id] = 1.0 if ls.provenance is Provenance.STRONG else float(ls.confidence)
        else:
            weights[aux.task_id] = aux.weight
    return sets, weights


def _torch_dtype(name: str):
    return {"float32": torch.float32, "float64": torch.float64}[name]


def predict(model: MultiTaskModel, arrays: SplitArrays, batch_size: int = 256) -> dict[str, torch.Tensor]:
    model.eval()
    chunks: dict[str, list[torch.Tensor]] = {k: [] for k in model.heads}
    with torch.no_grad():
        for start in range(0, len(arrays), batch_size):
            idx = np.arange(start, min(start + batch_size, len(arrays)))
            t, a, v, m, _, _ = arrays.batch(idx)
            for k, out in model(t, a, v, m).items():
                chunks[k].append(out)
    return {k: torch.cat(v) for k, v in chunks.items()}


def task_metrics(task: TaskSpec, logits: torch.Tensor, targets: torch.Tensor, present: torch.Tensor) -> M.TaskMetrics:
    keep = present.numpy()
    x = logits.detach().to(torch.float64).numpy()[keep]
    y = targets.numpy()[keep]
    if task.kind is TaskKind.MULTILABEL:
        return M.evaluate_multilabel(x, y >= 0.5, classes=task.classes, task_id=task.task_id)
    return M.evaluate_categorical(x, y.argmax(axis=1), classes=task.classes, task_id=task.task_id)


def _report(model, arrays: SplitArrays, tasks: Mapping[str, TaskSpec]) -> M.MetricsReport:
    logits = predict(model, arrays)
    report = M.MetricsReport()
    for task_id, task in tasks.items():
        if task_id in arrays.targets and bool(arrays.present[task_id].any()):
            report.tasks[task_id] = task_metrics(task, logits[task_id], arrays.targets[task_id], arrays.present[task_id])
    return report


def _eval_loss(model, arrays, weights, tasks, pos_weights, soft, batch_size=256) -> float:
    model.eval()
    total, n = 0.0, 0
    with torch.no_grad():
        for start in range(0, len(arrays), batch_size):
            idx = np.arange(start, min(start + batch_size, len(arrays)))
            t, a, v, m, y, ok = arrays.batch(idx)
            loss = multitask_loss(model(t, a, v, m), y, weights, tasks, ok, pos_weights, soft)
            total += float(loss) * len(idx)
            n += len(idx)
    return total / max(n, 1)


def _shared_checksum(model: MultiTaskModel, active: set[str]) -> str:
    """Checksum of the backbone and of the heads of tasks with non-zero weight."""
    import hashlib as _h

    h = _h.sha256()
    for name, p in sorted(model.state_dict().items()):
        if name.startswith("heads.") and name.split(".")[1] not in active:
            continue
        h.update(name.encode())
        h.update(p.detach().contiguous().numpy().tobytes())
    return h.hexdigest()


def train(run: RunConfig, data: Dataset, out_dir=None, record_checksums: bool = False) -> RunResult:
    """Train one configuration and report test metrics of the best-validation checkpoint."""
    problems = validate_dataset(data)
    if problems:
        raise ValueError(f"dataset {data.name!r} is invalid: {problems[0]}")
    started = time.perf_counter()
    dtype = _torch_dtype(run.dtype)
    label_sets, weights = _task_label_sets(run, data)
    tasks = {k: ls.task for k, ls in label_sets.items()}
    soft = {k: run.soft_labels and ls.provenance is Provenance.WEAK for k, ls in label_sets.items()}
    ids = resolve_splits(data, run.seed, run.valid_fraction)
    # samples carrying no label for any weighted task add nothing but empty steps
    labelled = set()
    for k, ls in label_sets.items():
        if weights[k] > 0:
            labelled.update(ls.labels)
    ids["train"] = [sid for sid in ids["train"] if sid in labelled]
    train_arr = split_arrays(data, ids["train"], label_sets, dtype)
    valid_arr = split_arrays(data, ids["valid"], label_sets, dtype)
    test_arr = split_arrays(data, ids["test"], label_sets, dtype) if ids["test"] else None

    pos_weights = {
        k: positive_weights(train_arr.targets[k], train_arr.present[k]).to(dtype)
        for k, t in tasks.items()
        if t.kind is TaskKind.MULTILABEL
    }
    train_targets = {k: v.to(dtype) for k, v in train_arr.targets.items()}
    train_arr.targets = train_targets

    model = build_model(run.model, list(tasks.values()), seed=run.seed, dtype=dtype)
    # reseed so dropout streams do not depend on how many heads were initialised
    torch.manual_seed(run.seed + 7919)
    params = [p for p in model.parameters()]
    state = AdamState()
    active = {k for k, w in weights.items() if w > 0}
    main = tasks[run.main_task]

    train_loss, valid_loss, valid_sel, checksums = [], [], [], []
    best_value, best_epoch, best_state = -math.inf, -1, None
    for epoch in range(run.max_epochs):
        model.train()
        order = np.random.default_rng([run.seed, epoch, 0x5417]).permutation(len(train_arr))
        running, seen = 0.0, 0
        for start in range(0, len(order), run.batch_size):
            idx = order[start : start + run.batch_size]
            t, a, v, m, y, ok = train_arr.batch(idx)
            loss = multitask_loss(model(t, a, v, m), y, weights, tasks, ok, pos_weights, soft)
            if not bool(torch.isfinite(loss)):
                raise AbortedRunError(f"non-finite loss at epoch {epoch}")
            for p in params:
                p.grad = None
            loss.backward()
            adam_step(params, [p.grad for p in params], state, run.lr, weight_decay=run.weight_decay)
            running += loss.item() * len(idx)
            seen += len(idx)
        train_loss.append(running / seen)
        valid_loss.append(_eval_loss(model, valid_arr, weights, tasks, pos_weights, soft))
        rep = _report(model, valid_arr, {run.main_task: main})
        value = rep[run.main_task].selection_value()
        valid_sel.append(value)
        if record_checksums:
            checksums.append(_shared_checksum(model, active))
        if value > best_value:
            best_value, best_epoch = value, epoch
            best_state = copy.deepcopy(model.state_dict())
        logger.debug("epoch %d train %.4f valid %.4f sel %.4f", epoch, train_loss[-1], valid_loss[-1], value)

    model.load_state_dict(best_state)
    test_report = _report(model, test_arr, tasks) if test_arr is not None else M.MetricsReport()
    result = RunResult(
        seed=run.seed,
        config=run.to_dict(),
        best_epoch=best_epoch,
        selection_value=best_value,
        train_loss=train_loss,
        valid_loss=valid_loss,
        valid_selection=valid_sel,
        test=test_report.to_dict(),
        checksums=checksums,
        confidence={k: float(ls.confidence) for k, ls in label_sets.items()},
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ckpt = save_checkpoint(model, out / "checkpoint.npz", extra={"run_config": run.to_dict(), "splits": ids})
        result.checkpoint = str(ckpt)
    result.wall_time = time.perf_counter() - started
    if out_dir is not None:
        (Path(out_dir) / "result.json").write_text(json.dumps(result.to_dict(), indent=1, sort_keys=True))
    result._model = model  # not serialised; lets callers reuse the selected weights
    return result


def evaluate(checkpoint, data: Dataset, tasks: Sequence[str] | None = None, split: str = "test") -> M.MetricsReport:
    """Metrics of a checkpoint (path or model) on one split, per task, per class and averaged."""
    if isinstance(checkpoint, MultiTaskModel):
        model, meta = checkpoint, {}
    else:
        model, meta = load_checkpoint(checkpoint)
    task_ids = list(model.tasks) if tasks is None else list(tasks)
    if not task_ids:
        return M.MetricsReport()
    extra = meta.get("extra", {})
    if split == "valid" and "splits" in extra:
        ids = extra["splits"]["valid"]
    else:
        ids = list(data.splits.get(split, ()))
    label_sets = {}
    for task_id in task_ids:
        run_cfg = extra.get("run_config")
        prov = None
        if run_cfg:
            for aux in run_cfg.get("aux_tasks", ()):
                if aux["task_id"] == task_id:
                    prov = aux["provenance"]
        label_sets[task_id] = data.label_set(task_id, prov)
    dtype = next(model.parameters()).dtype
    arrays = split_arrays(data, ids, label_sets, dtype)
    return _report(model, arrays, {k: model.tasks[k] for k in task_ids})
