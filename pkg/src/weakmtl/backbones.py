"""Shared multimodal backbones and per-task linear heads.

A backbone maps aligned ``(text, audio, video, mask)`` batches to one
representation ``r`` per sample. Every task head is a single affine layer on
that same ``r``.

Encoders: ``avg`` (masked mean pooling, then a ReLU MLP), ``bilstm`` (forward
state at the last unmasked step concatenated with the backward state at step
0) and ``transformer`` (learned CLS token, sinusoidal positions, post-norm
encoder layers, CLS output).

Fusion: ``early`` concatenates modalities per step before one encoder,
``late`` encodes each modality separately and takes a weighted sum of the
projected vectors, ``hybrid`` takes a weighted sum of the early and late
representations.
"""

from __future__ import annotations

import dataclasses
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import torch
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence

from .datamodel import DEFAULT_DIMS, TaskSpec

CHECKPOINT_VERSION = 1
ENCODERS = ("avg", "bilstm", "transformer")
FUSIONS = ("early", "late", "hybrid")


class EmptySequenceError(ValueError):
    """Raised when a sequence in the batch has no unmasked step."""


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    encoder: str = "avg"
    fusion: str = "early"
    input_dims: tuple[int, int, int] = DEFAULT_DIMS
    output_dim: int = 128
    dropout: float = 0.0
    fusion_weights: str = "learned_softmax"
    # fixed-mode weights; None means uniform
    late_weights: tuple[float, float, float] | None = None
    hybrid_weights: tuple[float, float] | None = None
    # avg: MLP widths after pooling (early and each late branch)
    hidden_dims: tuple[int, ...] = (128,)
    # bilstm: early width and per-modality late widths
    lstm_dim: int = 300
    late_lstm_dims: tuple[int, int, int] = (300, 128, 128)
    # transformer: early settings and per-modality late settings
    layers: int = 2
    heads: int = 5
    ff_dim: int = 512
    model_dim: int = 80
    late_heads: tuple[int, int, int] = (4, 2, 2)
    late_ff_dims: tuple[int, int, int] = (300, 128, 64)
    late_model_dims: tuple[int, int, int] = (64, 32, 16)

    def __post_init__(self):
        for name in ("input_dims", "hidden_dims", "late_lstm_dims", "late_heads", "late_ff_dims", "late_model_dims"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        for name in ("late_weights", "hybrid_weights"):
            if getattr(self, name) is not None:
                object.__setattr__(self, name, tuple(float(w) for w in getattr(self, name)))
        self.validate()

    def validate(self):
        if self.encoder not in ENCODERS:
            raise ValueError(f"unknown encoder {self.encoder!r}; expected one of {ENCODERS}")
        if self.fusion not in FUSIONS:
            raise ValueError(f"unknown fusion {self.fusion!r}; expected one of {FUSIONS}")
        if self.fusion_weights not in ("learned_softmax", "fixed"):
            raise ValueError(f"unknown fusion weight mode {self.fusion_weights!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")
        if not self.hidden_dims or len(self.input_dims) != 3:
            raise ValueError("hidden_dims must be non-empty and input_dims must have three entries")
        if self.model_dim % self.heads:
            raise ValueError(f"heads={self.heads} does not divide model_dim={self.model_dim}")
        for d, h in zip(self.late_model_dims, self.late_heads):
            if d % h:
                raise ValueError(f"late heads {h} do not divide late model dim {d}")
        if self.late_weights is not None and len(self.late_weights) != 3:
            raise ValueError("late_weights needs three values")
        if self.hybrid_weights is not None and len(self.hybrid_weights) != 2:
            raise ValueError("hybrid_weights needs two values")

    @property
    def name(self) -> str:
        prefix = {"early": "EF", "late": "LF", "hybrid": "EF_LF"}[self.fusion]
        suffix = {"avg": "AVG", "bilstm": "LSTM", "transformer": "TRANS"}[self.encoder]
        return f"{prefix}_{suffix}"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelConfig":
        return cls(**dict(d))

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)


def _check_mask(mask: torch.Tensor) -> torch.Tensor:
    lengths = mask.sum(dim=1)
    if bool((lengths == 0).any()):
        raise EmptySequenceError("every sequence needs at least one unmasked step")
    return lengths


def masked_mean(seq: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    lengths = _check_mask(mask)
    m = mask.to(seq.dtype).unsqueeze(-1)
    return (seq * m).sum(dim=1) / lengths.to(seq.dtype).unsqueeze(-1)


class AvgEncoder(nn.Module):
    """Masked mean over time followed by ``Linear -> ReLU -> Dropout`` per hidden width."""

    def __init__(self, input_dim: int, hidden_dims: Sequence[int], dropout: float = 0.0):
        super().__init__()
        layers = []
        prev = input_dim
        for width in hidden_dims:
            layers += [nn.Linear(prev, width), nn.ReLU(), nn.Dropout(dropout)]
            prev = width
        self.mlp = nn.Sequential(*layers)
        self.output_dim = prev

    def pool(self, seq, mask):
        return masked_mean(seq, mask)

    def forward(self, seq, mask):
        return self.mlp(self.pool(seq, mask))


class BiLSTMEncoder(nn.Module):
    def __init__(self, input_dim: int, hidden_dim: int, dropout: float = 0.0):
        super().__init__()
        self.lstm = nn.LSTM(input_dim, hidden_dim, num_layers=1, batch_first=True, bidirectional=True)
        self.dropout = nn.Dropout(dropout)
        self.output_dim = 2 * hidden_dim

    def forward(self, seq, mask):
        lengths = _check_mask(mask).to("cpu", torch.int64)
        packed = pack_padded_sequence(seq, lengths, batch_first=True, enforce_sorted=False)
        _, (h_n, _) = self.lstm(packed)
        # h_n[0]: forward direction at the last valid step; h_n[1]: backward direction at step 0
        return self.dropout(torch.cat([h_n[0], h_n[1]], dim=-1))


def sinusoidal_positions(length: int, dim: int, dtype=torch.float32) -> torch.Tensor:
    pos = torch.arange(length, dtype=torch.float64).unsqueeze(1)
    rate = torch.exp(torch.arange(0, dim, 2, dtype=torch.float64) * (-math.log(10000.0) / dim))
    pe = torch.zeros(length, dim, dtype=torch.float64)
    pe[:, 0::2] = torch.sin(pos * rate)
    pe[:, 1::2] = torch.cos(pos * rate)[:, : dim // 2]
    return pe.to(dtype)


class SelfAttention(nn.Module):
    def __init__(self, dim: int, heads: int, dropout: float = 0.0):
        super().__init__()
        self.heads = heads
        self.head_dim = dim // heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.out = nn.Linear(dim, dim)
        self.dropout = nn.Dropout(dropout)
        self.last_weights: torch.Tensor | None = None

    def forward(self, x, key_mask):
        b, s, d = x.shape
        q, k, v = self.qkv(x).view(b, s, 3, self.heads, self.head_dim).permute(2, 0, 3, 1, 4)
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.head_dim)
        scores = scores.masked_fill(~key_mask[:, None, None, :], float("-inf"))
        weights = torch.softmax(scores, dim=-1)
        self.last_weights = weights.detach()
        ctx = (self.dropout(weights) @ v).transpose(1, 2).reshape(b, s, d)
        return self.out(ctx)


class EncoderLayer(nn.Module):
    def __init__(self, dim: int, heads: int, ff_dim: int, dropout: float = 0.0):
        super().__init__()
        self.attn = SelfAttention(dim, heads, dropout)
        self.ff = nn.Sequential(nn.Linear(dim, ff_dim), nn.ReLU(), nn.Dropout(dropout), nn.Linear(ff_dim, dim))
        self.norm1 = nn.LayerNorm(dim)
        self.norm2 = nn.LayerNorm(dim)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x, key_mask):
        x = self.norm1(x + self.dropout(self.attn(x, key_mask)))
        return self.norm2(x + self.dropout(self.ff(x)))


class TransformerEncoder(nn.Module):
    def __init__(self, input_dim: int, model_dim: int, layers: int, heads: int, ff_dim: int, dropout: float = 0.0):
        super().__init__()
        if model_dim % heads:
            raise ValueError(f"heads={heads} does not divide model_dim={model_dim}")
        self.proj = nn.Linear(input_dim, model_dim)
        self.cls = nn.Parameter(torch.randn(model_dim) * 0.02)
        self.layers = nn.ModuleList(EncoderLayer(model_dim, heads, ff_dim, dropout) for _ in range(layers))
        self.dropout = nn.Dropout(dropout)
        self.output_dim = model_dim

    def forward(self, seq, mask):
        _check_mask(mask)
        b, s, _ = seq.shape
        x = self.proj(seq)
        x = torch.cat([self.cls.to(x.dtype).expand(b, 1, -1), x], dim=1)
        x = self.dropout(x + sinusoidal_positions(s + 1, x.shape[-1], x.dtype))
        key_mask = torch.cat([torch.ones(b, 1, dtype=torch.bool), mask.bool()], dim=1)
        for layer in self.layers:
            x = layer(x, key_mask)
        return x[:, 0]

    def attention_weights(self) -> list[torch.Tensor]:
        return [layer.attn.last_weights for layer in self.layers]


def build_encoder(config: ModelConfig, input_dim: int, branch: int | None = None) -> nn.Module:
    """Encoder for the early branch (``branch=None``) or late branch ``branch`` (0=text, 1=audio, 2=video)."""
    if config.encoder == "avg":
        return AvgEncoder(input_dim, config.hidden_dims, config.dropout)
    if config.encoder == "bilstm":
        width = config.lstm_dim if branch is None else config.late_lstm_dims[branch]
        return BiLSTMEncoder(input_dim, width, config.dropout)
    if branch is None:
        return TransformerEncoder(input_dim, config.model_dim, config.layers, config.heads, config.ff_dim, config.dropout)
    return TransformerEncoder(
        input_dim,
        config.late_model_dims[branch],
        config.layers,
        config.late_heads[branch],
        config.late_ff_dims[branch],
        config.dropout,
    )


class WeightedSum(nn.Module):
    """``sum_k w_k x_k`` with softmax-normalised learned weights or fixed weights."""

    def __init__(self, n: int, mode: str = "learned_softmax", fixed: Sequence[float] | None = None):
        super().__init__()
        self.mode = mode
        if mode == "learned_softmax":
            self.logits = nn.Parameter(torch.zeros(n))
        else:
            w = torch.full((n,), 1.0 / n, dtype=torch.float64) if fixed is None else torch.tensor(fixed, dtype=torch.float64)
            self.register_buffer("fixed", w)

    def weights(self) -> torch.Tensor:
        if self.mode == "learned_softmax":
            return torch.softmax(self.logits, dim=0)
        return self.fixed

    def forward(self, xs: Sequence[torch.Tensor]) -> torch.Tensor:
        w = self.weights().to(xs[0].dtype)
        out = w[0] * xs[0]
        for k in range(1, len(xs)):
            out = out + w[k] * xs[k]
        return out


def _check_lengths(text, audio, video, mask):
    shapes = {tuple(x.shape[:2]) for x in (text, audio, video)}
    if len(shapes) != 1 or tuple(mask.shape) != shapes.pop():
        raise ValueError(
            f"modality batches must share (B, S) with the mask: "
            f"{tuple(text.shape)}, {tuple(audio.shape)}, {tuple(video.shape)}, mask {tuple(mask.shape)}"
        )


class EarlyFusion(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.encoder = build_encoder(config, sum(config.input_dims))
        self.output_dim = self.encoder.output_dim

    def fuse(self, text, audio, video):
        return torch.cat([text, audio, video], dim=-1)

    def forward(self, text, audio, video, mask):
        _check_lengths(text, audio, video, mask)
        return self.encoder(self.fuse(text, audio, video), mask)


class LateFusion(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.encoders = nn.ModuleList(build_encoder(config, d, branch=i) for i, d in enumerate(config.input_dims))
        self.projections = nn.ModuleList(nn.Linear(e.output_dim, config.output_dim) for e in self.encoders)
        self.combine = WeightedSum(3, config.fusion_weights, config.late_weights)
        self.output_dim = config.output_dim

    def branch_outputs(self, text, audio, video, mask) -> list[torch.Tensor]:
        _check_lengths(text, audio, video, mask)
        return [proj(enc(x, mask)) for x, enc, proj in zip((text, audio, video), self.encoders, self.projections)]

    def forward(self, text, audio, video, mask):
        return self.combine(self.branch_outputs(text, audio, video, mask))


class HybridFusion(nn.Module):
    """EF-LF: weighted sum of the early branch (projected) and the late branch."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.early = EarlyFusion(config)
        self.early_proj = nn.Linear(self.early.output_dim, config.output_dim)
        self.late = LateFusion(config)
        self.combine = WeightedSum(2, config.fusion_weights, config.hybrid_weights)
        self.output_dim = config.output_dim

    def branches(self, text, audio, video, mask):
        return self.early_proj(self.early(text, audio, video, mask)), self.late(text, audio, video, mask)

    def forward(self, text, audio, video, mask):
        return self.combine(self.branches(text, audio, video, mask))


def build_backbone(config: ModelConfig) -> nn.Module:
    return {"early": EarlyFusion, "late": LateFusion, "hybrid": HybridFusion}[config.fusion](config)


class MultiTaskModel(nn.Module):
    """Backbone shared by all tasks plus one affine head per task."""

    def __init__(self, config: ModelConfig, tasks: Sequence[TaskSpec]):
        super().__init__()
        self.config = config
        self.tasks = {t.task_id: t for t in tasks}
        self.backbone = build_backbone(config)
        self.output_dim = self.backbone.output_dim
        self.heads = nn.ModuleDict({t.task_id: nn.Linear(self.output_dim, t.output_dim) for t in tasks})

    def represent(self, text, audio, video, mask) -> torch.Tensor:
        return self.backbone(text, audio, video, mask)

    def forward(self, text, audio, video, mask) -> dict[str, torch.Tensor]:
        r = self.represent(text, audio, video, mask)
        return {task_id: head_apply(r, head) for task_id, head in self.heads.items()}


def head_apply(r: torch.Tensor, head: nn.Linear) -> torch.Tensor:
    """Task logits ``W r + b``; no activation."""
    if r.shape[-1] != head.in_features:
        raise ValueError(f"representation has dim {r.shape[-1]}, head expects {head.in_features}")
    return head(r)


def build_model(config: ModelConfig, tasks: Sequence[TaskSpec], seed: int | None = None, dtype=torch.float32) -> MultiTaskModel:
    if seed is not None:
        torch.manual_seed(seed)
    return MultiTaskModel(config, tasks).to(dtype)


def save_checkpoint(model: MultiTaskModel, path, extra: Mapping | None = None) -> Path:
    """Write a named-tensor ``.npz`` archive with the config and task list embedded."""
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "model_config": model.config.to_dict(),
        "tasks": [t.to_dict() for t in model.tasks.values()],
        "dtype": str(next(model.parameters()).dtype).replace("torch.", ""),
        "shapes": {k: list(v.shape) for k, v in model.state_dict().items()},
        "extra": dict(extra or {}),
    }
    arrays = {f"param/{k}": v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    path = Path(path)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    path.write_bytes(buf.getvalue())
    return path


def load_checkpoint(path) -> tuple[MultiTaskModel, dict]:
    with np.load(Path(path), allow_pickle=False) as archive:
        meta = json.loads(archive["meta"].tobytes().decode())
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {meta.get('format_version')!r}")
        state = {k[len("param/") :]: torch.from_numpy(archive[k].copy()) for k in archive.files if k.startswith("param/")}
    config = ModelConfig.from_dict(meta["model_config"])
    tasks = [TaskSpec.from_dict(t) for t in meta["tasks"]]
    model = MultiTaskModel(config, tasks).to(getattr(torch, meta["dtype"]))
    for k, shape in meta["shapes"].items():
        if list(state[k].shape) != shape:
            raise CheckpointError(f"tensor {k} has shape {list(state[k].shape)}, manifest says {shape}")
    model.load_state_dict(state)
    model.eval()
    return model, meta


def parameter_checksum(model: nn.Module) -> str:
    import hashlib

    h = hashlib.sha256()
    for name, p in sorted(model.state_dict().items()):
        h.update(name.encode())
        h.update(p.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()
