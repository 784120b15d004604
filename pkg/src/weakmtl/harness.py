"""Experiment protocol: learning-rate x batch-size grids, seed sweeps, aggregation and report tables.

Run directories follow ``<out>/<config-hash>/<seed>/``. Standard deviations are
population standard deviations (divide by n) over the seeds of one
configuration; failed runs are dropped from aggregation and counted.
"""

from __future__ import annotations

import dataclasses
import itertools
import json
import logging
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .datamodel import Dataset
from .trainer import RunConfig, RunResult, train

logger = logging.getLogger(__name__)

DEFAULT_LRS = (1e-3, 5e-4, 1e-4, 5e-5)
DEFAULT_BATCH_SIZES = (16, 32, 64, 128, 256, 512)
DEFAULT_SEEDS = (0, 1, 2, 3, 4)
WORKERS_ENV = "WEAKMTL_WORKERS"
STD_KIND = "population"


@dataclass(frozen=True)
class SweepConfig:
    base: RunConfig
    lrs: tuple[float, ...] = DEFAULT_LRS
    batch_sizes: tuple[int, ...] = DEFAULT_BATCH_SIZES
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    # second stage: ModelConfig overrides tried on the top configurations
    sub_grid: tuple[dict, ...] = ()
    top_k: int = 5

    def __post_init__(self):
        for name in ("lrs", "batch_sizes", "seeds"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
            if not getattr(self, name):
                raise ValueError(f"sweep {name} must be non-empty")
        object.__setattr__(self, "sub_grid", tuple(dict(d) for d in self.sub_grid))

    def configurations(self) -> list[RunConfig]:
        """Cross product in declaration order (learning rate major)."""
        return [self.base.replace(lr=lr, batch_size=bs) for lr, bs in itertools.product(self.lrs, self.batch_sizes)]

    def to_dict(self) -> dict:
        return {
            "base": self.base.to_dict(),
            "lrs": list(self.lrs),
            "batch_sizes": list(self.batch_sizes),
            "seeds": list(self.seeds),
            "sub_grid": list(self.sub_grid),
            "top_k": self.top_k,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SweepConfig":
        d = dict(d)
        d["base"] = RunConfig.from_dict(d["base"])
        return cls(**d)


@dataclass
class MetricSummary:
    mean: float
    std: float
    values: list[float]

    @classmethod
    def of(cls, values: Sequence[float]) -> "MetricSummary":
        vals = [float(v) for v in values]
        if not vals:
            return cls(float("nan"), float("nan"), [])
        arr = np.asarray(vals, dtype=np.float64)
        return cls(float(arr.mean()), float(arr.std(ddof=0)), vals)

    def cell(self, scale: float = 100.0) -> str:
        return format_cell(self.mean, self.std, scale)


@dataclass
class AggregateResult:
    config: dict
    config_hash: str
    seeds: list[int]
    metrics: dict[str, MetricSummary]
    selection: MetricSummary
    n_failed: int = 0
    failures: list[str] = field(default_factory=list)
    std_kind: str = STD_KIND
    result_hashes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "AggregateResult":
        d = dict(d)
        d["metrics"] = {k: MetricSummary(**v) for k, v in d["metrics"].items()}
        d["selection"] = MetricSummary(**d["selection"])
        return cls(**d)


def format_cell(mean: float, std: float, scale: float = 100.0) -> str:
    """``"72.4 ± 2.1"``: mean and std in percent, one decimal."""
    if mean is None or std is None or math.isnan(mean):
        return "-"
    return f"{scale * mean:.1f} ± {scale * std:.1f}"


def flatten_metrics(test: Mapping) -> dict[str, float]:
    """Flatten a serialised MetricsReport into ``task/...`` keys."""
    out = {}
    for task_id, t in test.items():
        if t.get("accuracy") is not None:
            out[f"{task_id}/accuracy"] = t["accuracy"]
        if t.get("f1") is not None:
            out[f"{task_id}/f1"] = t["f1"]
        for key, value in t["average"].items():
            out[f"{task_id}/average/{key}"] = value
        for name, m in t["per_class"].items():
            for key in ("wacc", "f1"):
                if m[key] is not None:
                    out[f"{task_id}/class/{name}/{key}"] = m[key]
    return {k: v for k, v in out.items() if v is not None and not (isinstance(v, float) and math.isnan(v))}


def aggregate(results: Sequence[RunResult], config: RunConfig, failures: Sequence[str] = ()) -> AggregateResult:
    """Mean and population std of every reported metric over the successful seeds."""
    ordered = sorted(results, key=lambda r: r.seed)
    per_metric: dict[str, list[float]] = {}
    for r in ordered:
        for k, v in flatten_metrics(r.test).items():
            per_metric.setdefault(k, []).append(v)
    return AggregateResult(
        config=config.to_dict(),
        config_hash=config.config_hash(),
        seeds=[r.seed for r in ordered],
        metrics={k: MetricSummary.of(v) for k, v in sorted(per_metric.items())},
        selection=MetricSummary.of([r.selection_value for r in ordered]),
        n_failed=len(failures),
        failures=list(failures),
        result_hashes=[r.content_hash() for r in ordered],
    )


def worker_count(requested: int | None = None) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return max(1, requested or 1)


def _run_one(args):
    run, data, out_dir = args
    import torch

    torch.set_num_threads(1)
    try:
        result = train(run, data, out_dir=out_dir)
        result.__dict__.pop("_model", None)
        return result, None
    except Exception as exc:  # recorded, not fatal to the sweep
        logger.exception("run %s seed %d failed", run.config_hash(), run.seed)
        return None, f"seed {run.seed}: {type(exc).__name__}: {exc}"


def _run_all(jobs: list, workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs))


def _run_dir(out_dir, run: RunConfig, seed: int):
    if out_dir is None:
        return None
    return Path(out_dir) / run.replace(seed=0).config_hash() / str(seed)


def seed_sweep(run: RunConfig, data: Dataset, seeds: Iterable[int] = DEFAULT_SEEDS, workers: int | None = None, out_dir=None) -> AggregateResult:
    seeds = list(seeds)
    if not seeds:
        raise ValueError("seed_sweep needs at least one seed")
    jobs = [(run.replace(seed=s), data, _run_dir(out_dir, run, s)) for s in seeds]
    outcomes = _run_all(jobs, worker_count(workers))
    results = [r for r, err in outcomes if r is not None]
    failures = [err for r, err in outcomes if err is not None]
    agg = aggregate(results, run.replace(seed=0), failures)
    if out_dir is not None:
        d = Path(out_dir) / agg.config_hash
        d.mkdir(parents=True, exist_ok=True)
        (d / "aggregate.json").write_text(json.dumps(agg.to_dict(), indent=1, sort_keys=True))
    return agg


def rank(results: Sequence[AggregateResult]) -> list[AggregateResult]:
    """Best validation selection mean first; ties keep enumeration order.

    Configurations with no successful seed are left off the leaderboard.
    """
    results = [a for a in results if a.seeds]
    def key(item):
        idx, agg = item
        mean = agg.selection.mean
        return (-(mean if not math.isnan(mean) else -math.inf), idx)

    return [agg for _, agg in sorted(enumerate(results), key=key)]


def grid_search(sweep: SweepConfig, data: Dataset, workers: int | None = None, out_dir=None) -> list[AggregateResult]:
    """Run every (lr, batch size) pair over the seed set and return the leaderboard.

    With a ``sub_grid``, each of the ``top_k`` first-stage configurations is
    re-run once per model override and the combined leaderboard is returned.
    """
    first = [seed_sweep(cfg, data, sweep.seeds, workers, out_dir) for cfg in sweep.configurations()]
    board = rank(first)
    if sweep.sub_grid:
        second = []
        for agg in board[: sweep.top_k]:
            base = RunConfig.from_dict(agg.config)
            for overrides in sweep.sub_grid:
                cfg = base.replace(model=base.model.replace(**overrides))
                second.append(seed_sweep(cfg, data, sweep.seeds, workers, out_dir))
        board = rank(first + second)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "leaderboard.json").write_text(json.dumps([a.to_dict() for a in board], indent=1, sort_keys=True))
        (out / "leaderboard.tsv").write_text(leaderboard_tsv(board))
        manifest = {"sweep": sweep.to_dict(), "std": STD_KIND, "configs": {a.config_hash: a.config for a in board}}
        (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    for agg in first:
        if not agg.seeds:
            logger.warning("configuration %s failed on every seed: %s", agg.config_hash, agg.failures)
    return board


def leaderboard_rows(board: Sequence[AggregateResult]) -> list[dict]:
    """Flat rows (hash, lr, batch size, selection mean) for the raw metric file."""
    return [
        {
            "config_hash": a.config_hash,
            "lr": a.config["lr"],
            "batch_size": a.config["batch_size"],
            "selection_mean": a.selection.mean,
            "selection_std": a.selection.std,
            "n_failed": a.n_failed,
        }
        for a in board
    ]


def leaderboard_tsv(board: Sequence[AggregateResult]) -> str:
    """Raw metric file: one row per configuration with full-precision values."""
    rows = leaderboard_rows(board)
    cols = ["config_hash", "lr", "batch_size", "selection_mean", "selection_std", "n_failed"]
    lines = ["\t".join(cols)]
    for r in rows:
        lines.append("\t".join(repr(r[c]) if isinstance(r[c], float) else str(r[c]) for c in cols))
    return "\n".join(lines) + "\n"


# report tables

TASK_TITLES = {"emotion": "Emotion", "sentiment": "Sentiment", "sarcasm": "Sarcasm"}


def training_label(config: Mapping) -> str:
    """Row label in the multi-task layout: main task, "+ Aux(W)" or "All"."""
    aux = [a for a in config.get("aux_tasks", ()) if a["weight"] > 0]
    if not aux:
        return TASK_TITLES.get(config["main_task"], config["main_task"].title())
    if len(aux) > 1:
        return "All"
    a = aux[0]
    tag = "W" if a["provenance"] == "weak" else "S"
    return f"+ {TASK_TITLES.get(a['task_id'], a['task_id'].title())}({tag})"


@dataclass
class ReportEntry:
    model: str
    result: AggregateResult
    target: str = ""
    training: str | None = None


def _task_columns(result: AggregateResult, task_id: str, per_class: bool) -> list[tuple[str, str]]:
    metrics = result.metrics
    if f"{task_id}/accuracy" in metrics:
        return [("Acc", f"{task_id}/accuracy"), ("F1", f"{task_id}/f1")]
    cols = []
    if per_class:
        classes = []
        for key in metrics:
            m = re.match(rf"{re.escape(task_id)}/class/(.+)/wacc$", key)
            if m:
                classes.append(m.group(1))
        for c in classes:
            cols += [(f"{c} WAcc", f"{task_id}/class/{c}/wacc"), (f"{c} F1", f"{task_id}/class/{c}/f1")]
    cols += [("Avg.WAcc", f"{task_id}/average/wacc"), ("Avg.F1", f"{task_id}/average/f1")]
    return cols


def _cell(result: AggregateResult, key: str) -> str:
    m = result.metrics.get(key)
    return m.cell() if m is not None else "-"


def report_table(entries: Sequence[ReportEntry], layout: str = "benchmark") -> str:
    """Pipe-separated table; cells are ``mean ± std`` in percent with one decimal."""
    if layout not in ("benchmark", "mtl"):
        raise ValueError(f"unknown layout {layout!r}")
    entries = list(entries)
    if layout == "benchmark":
        cols = _task_columns(entries[0].result, entries[0].result.config["main_task"], True) if entries else []
        header = ["Model"] + [c for c, _ in cols]
        lines = [" | ".join(header)]
        for e in entries:
            lines.append(" | ".join([e.model] + [_cell(e.result, key) for _, key in cols]))
        return "\n".join(lines) + "\n"

    models = list(dict.fromkeys(e.model for e in entries))
    rows: dict[tuple[str, str], dict[str, ReportEntry]] = {}
    for e in entries:
        label = e.training or training_label(e.result.config)
        target = e.target or e.result.config["main_task"]
        rows.setdefault((target, label), {})[e.model] = e
    header = ["Target Task", "Training Tasks"]
    metric_names = ["Avg.WAcc", "Avg.F1"]
    if entries:
        first = entries[0].result
        metric_names = [c for c, _ in _task_columns(first, first.config["main_task"], False)]
    header += [f"{m} {name}" for m in models for name in metric_names]
    lines = [" | ".join(header)]
    for (target, label), by_model in rows.items():
        cells = [target, label]
        for m in models:
            e = by_model.get(m)
            if e is None:
                cells += ["-"] * len(metric_names)
            else:
                cells += [_cell(e.result, key) for _, key in _task_columns(e.result, e.result.config["main_task"], False)]
        lines.append(" | ".join(cells))
    return "\n".join(lines) + "\n"


_CELL_RE = re.compile(r"^(-?\d+\.\d) ± (\d+\.\d)$")


def parse_table(text: str) -> list[dict[str, object]]:
    """Read a table written by :func:`report_table`; cells become ``(mean, std)`` percent pairs."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        return []
    header = [h.strip() for h in lines[0].split(" | ")]
    rows = []
    for ln in lines[1:]:
        cells = [c.strip() for c in ln.split(" | ")]
        row = {}
        for h, c in zip(header, cells):
            m = _CELL_RE.match(c)
            row[h] = (float(m.group(1)), float(m.group(2))) if m else c
        rows.append(row)
    return rows


def load_aggregates(directory) -> list[AggregateResult]:
    out = []
    for path in sorted(Path(directory).glob("*/aggregate.json")):
        out.append(AggregateResult.from_dict(json.loads(path.read_text())))
    return out
