import os
import sys

import pytest
import torch

sys.path.insert(0, os.path.dirname(__file__))

from weakmtl.ingest import SyntheticConfig, SyntheticTask, generate_synthetic  # noqa: E402

torch.set_num_threads(1)

TINY_DIMS = (6, 4, 3)


def tiny_config(**over):
    base = dict(
        name="tiny",
        n_train=48,
        n_valid=16,
        n_test=16,
        seq_len=(3, 6),
        dims=TINY_DIMS,
        latent_dim=4,
        tasks=(SyntheticTask("main", "categorical", 2), SyntheticTask("aux", "multilabel", 3)),
        seed=7,
        world_seed=3,
    )
    base.update(over)
    return SyntheticConfig(**base)


@pytest.fixture
def tiny():
    return generate_synthetic(tiny_config())
