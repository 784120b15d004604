"""Command line entry point: ``weakmtl <subcommand> ...``.

Configs are JSON files. A run config may name a ``preset`` and override any
field; a missing ``model.input_dims`` is filled in from the dataset.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .datamodel import Dataset, TaskKind, validate_dataset
from .ingest import ContainerError, SyntheticConfig, attach_label_set, dataset_checksum, generate_synthetic, read_container, write_container
from .metrics import correlation_matrix

log = logging.getLogger("weakmtl")

SWEEP_KEYS = ("lrs", "batch_sizes", "seeds", "sub_grid", "top_k")


def _dump(obj, out: str | None):
    text = json.dumps(obj, indent=1, sort_keys=True)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n")
    else:
        print(text)


def load_run_config(path, data: Dataset | None = None):
    from . import presets
    from .backbones import ModelConfig
    from .trainer import RunConfig

    raw = json.loads(Path(path).read_text())
    if "base" in raw:
        raw = raw["base"]
    raw = {k: v for k, v in raw.items() if k not in SWEEP_KEYS}
    if "preset" in raw:
        base = presets.preset(raw.pop("preset"), raw.get("main_task", "emotion")).to_dict()
        model_over = raw.pop("model", {})
        base["model"].update(model_over)
        base.update(raw)
        raw = base
    model = dict(raw.get("model", {}))
    if "input_dims" not in model and data is not None and data.dims is not None:
        model["input_dims"] = list(data.dims)
    raw["model"] = ModelConfig.from_dict(model).to_dict()
    return RunConfig.from_dict(raw)


def load_sweep_config(path, data: Dataset):
    from .harness import SweepConfig

    raw = json.loads(Path(path).read_text())
    base = load_run_config(path, data)
    opts = {k: raw[k] for k in SWEEP_KEYS if k in raw}
    return SweepConfig(base=base, **opts)


def cmd_synth(args) -> int:
    config = SyntheticConfig.from_file(args.config)
    data = generate_synthetic(config)
    write_container(data, args.out)
    print(json.dumps({"name": data.name, "samples": len(data.samples), "checksum": dataset_checksum(data)}))
    return 0


def cmd_validate(args) -> int:
    try:
        data = read_container(args.dir)
    except ContainerError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    problems = validate_dataset(data)
    for v in problems:
        print(v)
    if not problems:
        print(f"ok: {data.name} ({len(data.samples)} samples, {len(data.label_sets)} label sets)")
    return 1 if problems else 0


def label_columns(data: Dataset, split: str | None = None) -> dict[str, np.ndarray]:
    """One column per class (binary tasks: the positive class) over samples labelled in every set."""
    ids = list(data.splits.get(split, ())) if split else list(data.samples)
    for ls in data.label_sets:
        ids = [sid for sid in ids if sid in ls.labels]
    columns = {}
    for ls in data.label_sets:
        y, _ = ls.matrix(ids)
        classes = list(ls.task.classes)
        if ls.task.kind is TaskKind.CATEGORICAL and len(classes) == 2:
            picks = [1]
        else:
            picks = range(len(classes))
        for c in picks:
            columns[f"{ls.task.task_id}.{ls.provenance.value}:{classes[c]}"] = y[:, c]
    return columns


def cmd_correlate(args) -> int:
    data = read_container(args.dir)
    if len(data.label_sets) < 2:
        print("correlate needs a dataset with at least two label sets", file=sys.stderr)
        return 1
    columns = label_columns(data, args.split)
    _dump({"dataset": data.name, "split": args.split, "n": int(len(next(iter(columns.values())))), "pearson": correlation_matrix(columns)}, args.out)
    return 0


def cmd_train_labeler(args) -> int:
    from .backbones import ModelConfig
    from .weaklabel import DEFAULT_LABELER_CONFIG, train_labeler

    data = read_container(args.data)
    config = DEFAULT_LABELER_CONFIG
    if args.config:
        config = ModelConfig.from_dict(json.loads(Path(args.config).read_text()))
    config = config.replace(input_dims=data.dims)
    art = train_labeler(data, args.task, config, out_dir=args.out, lr=args.lr, batch_size=args.batch_size, max_epochs=args.epochs, seed=args.seed)
    print(json.dumps({"identity": art.identity, "confidence": art.confidence}))
    return 0


def cmd_gen_weak_labels(args) -> int:
    from .weaklabel import LabelerArtifact, acquire_weak_labels

    labeler = LabelerArtifact.load(args.labeler)
    target = read_container(args.target)
    ls = acquire_weak_labels(labeler, target, soft=args.soft)
    attach_label_set(args.target, ls)
    print(json.dumps({"task": ls.task.task_id, "provenance": ls.provenance.value, "samples": len(ls.labels), "confidence": ls.confidence}))
    return 0


def cmd_train(args) -> int:
    from .trainer import train

    data = read_container(args.data)
    run = load_run_config(args.config, data)
    result = train(run, data, out_dir=args.out)
    print(json.dumps({"best_epoch": result.best_epoch, "selection": result.selection_value, "checkpoint": result.checkpoint}))
    return 0


def cmd_evaluate(args) -> int:
    from .trainer import evaluate

    data = read_container(args.data)
    report = evaluate(args.checkpoint, data, split=args.split)
    _dump(report.to_dict(), args.out)
    return 0


def cmd_sweep(args) -> int:
    from .harness import grid_search, leaderboard_rows

    data = read_container(args.data)
    sweep = load_sweep_config(args.config, data)
    board = grid_search(sweep, data, workers=args.workers, out_dir=args.out)
    for row in leaderboard_rows(board):
        print(json.dumps(row))
    return 0


def cmd_seed_sweep(args) -> int:
    from .harness import seed_sweep

    data = read_container(args.data)
    run = load_run_config(args.config, data)
    seeds = args.seeds if args.seeds is not None else json.loads(Path(args.config).read_text()).get("seeds", [0, 1, 2, 3, 4])
    agg = seed_sweep(run, data, seeds, workers=args.workers, out_dir=args.out)
    print(json.dumps({"config_hash": agg.config_hash, "selection": agg.selection.mean, "n_failed": agg.n_failed}))
    return 0


def cmd_report(args) -> int:
    from .harness import ReportEntry, load_aggregates, report_table
    from .backbones import ModelConfig

    aggs = load_aggregates(args.inp)
    entries = [ReportEntry(ModelConfig.from_dict(a.config["model"]).name, a) for a in aggs]
    table = report_table(entries, args.layout)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(table)
        out.with_suffix(".raw.json").write_text(json.dumps([a.to_dict() for a in aggs], indent=1, sort_keys=True))
    print(table, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="weakmtl", description="Multi-task multimodal training with weak auxiliary labels.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic dataset container")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("validate", help="check a dataset container")
    s.add_argument("dir")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("correlate", help="Pearson correlation between label sets")
    s.add_argument("dir")
    s.add_argument("--split", default=None)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_correlate)

    s = sub.add_parser("train-labeler", help="train a weak labeler on a source dataset")
    s.add_argument("--data", required=True)
    s.add_argument("--task", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config", default=None, help="model config JSON (default: hybrid BiLSTM)")
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--batch-size", type=int, default=32)
    s.add_argument("--epochs", type=int, default=50)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_train_labeler)

    s = sub.add_parser("gen-weak-labels", help="label a target dataset with a trained labeler")
    s.add_argument("--labeler", required=True)
    s.add_argument("--target", required=True)
    s.add_argument("--soft", action="store_true", help="keep probabilities instead of hard labels")
    s.set_defaults(func=cmd_gen_weak_labels)

    s = sub.add_parser("train", help="train one run config")
    s.add_argument("--config", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", help="evaluate a checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--split", default="test")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sweep", help="learning rate x batch size grid search")
    s.add_argument("--config", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int, default=None)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("seed-sweep", help="run one config over several seeds")
    s.add_argument("--config", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seeds", type=int, nargs="+", default=None)
    s.add_argument("--workers", type=int, default=None)
    s.set_defaults(func=cmd_seed_sweep)

    s = sub.add_parser("report", help="format aggregated results as a table")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--layout", choices=("benchmark", "mtl"), default="benchmark")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
