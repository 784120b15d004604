"""Models whose weights encode a synthetic world's decision rule exactly.

With zero feature noise, the mean pooled early-fusion input is ``s * L z``
(``L`` the stacked modality loadings). An EF-AVG model whose first layer is
``[P; -P]`` with ``P = pinv(s L)`` produces ``[relu(z), relu(-z)]``, and a head
``M [I, -I]`` then returns ``M z``: the generator's own task scores.
"""

from __future__ import annotations

import numpy as np
import torch

from .backbones import ModelConfig, MultiTaskModel
from .ingest.synthetic import SyntheticWorld
from .weaklabel import LabelerArtifact, model_hash


def oracle_model(world: SyntheticWorld, task_ids=None, signal_scale: float = 1.0) -> MultiTaskModel:
    task_ids = list(world.tasks) if task_ids is None else list(task_ids)
    k = world.latent_dim
    config = ModelConfig(encoder="avg", fusion="early", input_dims=world.dims, hidden_dims=(2 * k,), output_dim=2 * k)
    model = MultiTaskModel(config, [world.tasks[t] for t in task_ids]).to(torch.float64)
    loadings = signal_scale * np.concatenate(world.modality_loadings, axis=0)
    pinv = np.linalg.pinv(loadings)
    first = model.backbone.encoder.mlp[0]
    split = np.concatenate([np.eye(k), -np.eye(k)], axis=1)
    with torch.no_grad():
        first.weight.copy_(torch.from_numpy(np.concatenate([pinv, -pinv], axis=0)))
        first.bias.zero_()
        for t in task_ids:
            head = model.heads[t]
            head.weight.copy_(torch.from_numpy(world.task_projections[t] @ split))
            head.bias.zero_()
    model.eval()
    return model


def oracle_labeler(world: SyntheticWorld, task_id: str, source_dataset: str = "oracle", signal_scale: float = 1.0) -> LabelerArtifact:
    model = oracle_model(world, [task_id], signal_scale)
    return LabelerArtifact(
        source_dataset=source_dataset,
        task=world.tasks[task_id],
        confidence=1.0,
        config_hash=model_hash(model.config, model.tasks.values()),
        metadata={"oracle": True},
        model=model,
    )
