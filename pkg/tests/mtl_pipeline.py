"""Synthetic weak-auxiliary experiment shared by the acceptance tests.

Source and target corpora share one latent world. A labeler trained on the
source's auxiliary labels annotates every target sample; only the first
``n_main`` target train samples keep their main-task labels. Three students
(main only, main + weak aux, main + strong aux) are trained over five seeds.

    python3 tests/mtl_pipeline.py [--world 11]
"""
import argparse
import time

import numpy as np

from weakmtl.backbones import ModelConfig
from weakmtl.datamodel import LabelSet
from weakmtl.ingest import SyntheticConfig, SyntheticTask, generate_synthetic
from weakmtl.trainer import RunConfig, TaskWeight, train
from weakmtl.weaklabel import acquire_weak_labels, train_labeler

WORLD = dict(
    rho=0.85, eta=0.05, noise_scale=1.0, latent_dim=32,
    tasks=(SyntheticTask("main", "categorical", 2), SyntheticTask("aux", "categorical", 2)),
)
N_MAIN = 200
SEEDS = (0, 1, 2, 3, 4)
STUDENT = ModelConfig(encoder="avg", fusion="hybrid", output_dim=64, hidden_dims=(64,))


def build_target(world_seed=11):
    src = generate_synthetic(SyntheticConfig(name="source", n_train=4000, n_valid=300, n_test=500, seed=101, world_seed=world_seed, **WORLD))
    tgt = generate_synthetic(SyntheticConfig(name="target", n_train=800, n_valid=300, n_test=1000, seed=202, world_seed=world_seed, **WORLD))
    keep = set(tgt.splits["train"][:N_MAIN]) | set(tgt.splits["valid"]) | set(tgt.splits["test"])
    main = tgt.label_set("main", "strong")
    trimmed = LabelSet(main.task, main.provenance, {k: v for k, v in main.labels.items() if k in keep})
    tgt = tgt.without_label_set("main", "strong").with_label_set(trimmed)
    labeler = train_labeler(src, "aux", STUDENT, max_epochs=30, lr=1e-3, batch_size=64)
    return tgt.with_label_set(acquire_weak_labels(labeler, tgt)), labeler


def run_pipeline(world_seed=11):
    """Return {arm: [RunResult per seed]} and the labeler confidence."""
    tgt, labeler = build_target(world_seed)
    arms = {"single": (), "weak": (TaskWeight("aux", 1.0, "weak"),), "strong": (TaskWeight("aux", 1.0, "strong"),)}
    results = {}
    for arm, aux in arms.items():
        results[arm] = [train(RunConfig(STUDENT, "main", aux, lr=5e-4, batch_size=32, max_epochs=60, seed=s), tgt) for s in SEEDS]
    return results, labeler.confidence


def accuracies(results):
    return {arm: np.array([r.test["main"]["accuracy"] for r in rs]) for arm, rs in results.items()}


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--world", type=int, default=11)
    args = p.parse_args()
    t0 = time.time()
    results, conf = run_pipeline(args.world)
    acc = accuracies(results)
    print(f"world {args.world} labeler confidence {conf:.3f} ({time.time() - t0:.0f}s)")
    for arm, a in acc.items():
        print(f"{arm:<7} {100 * a.mean():.2f} ± {100 * a.std():.2f}")


if __name__ == "__main__":
    main()
