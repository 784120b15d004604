"""Multimodal multi-task learning with weakly labelled auxiliary tasks."""

from .backbones import ModelConfig, MultiTaskModel, build_model, load_checkpoint, save_checkpoint
from .datamodel import Dataset, LabelSet, Provenance, Sample, TaskKind, TaskSpec, validate_dataset
from .harness import SweepConfig, grid_search, report_table, seed_sweep
from .presets import loss_weights, preset
from .trainer import RunConfig, RunResult, TaskWeight, evaluate, train
from .weaklabel import LabelerArtifact, acquire_weak_labels, train_labeler

__version__ = "0.1.0"
