"""Segment reduction and padded batch assembly."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..datamodel import Sample


class EmptySegmentError(ValueError):
    pass


def reduce_segments(segments) -> np.ndarray:
    """Collapse the acoustic/visual segments spanning one word into their mean."""
    arr = [np.asarray(s, dtype=np.float64) for s in segments]
    if not arr:
        raise EmptySegmentError("cannot reduce an empty list of segments")
    shapes = {a.shape for a in arr}
    if len(shapes) != 1 or arr[0].ndim != 1:
        raise ValueError(f"segments must be vectors of one dimension, got shapes {sorted(shapes)}")
    return np.mean(np.stack(arr), axis=0)


@dataclass
class Batch:
    sample_ids: list[str]
    text: np.ndarray
    audio: np.ndarray
    video: np.ndarray
    mask: np.ndarray  # (B, S_max) of {0, 1}

    @property
    def lengths(self) -> np.ndarray:
        return self.mask.sum(axis=1).astype(np.int64)

    def __len__(self):
        return len(self.sample_ids)


def pad_and_mask(samples: Sequence[Sample], dtype=np.float32) -> Batch:
    """Zero-pad every modality to the longest sequence and build the step mask."""
    if not samples:
        raise ValueError("pad_and_mask needs at least one sample")
    dims = samples[0].dims
    for s in samples:
        if s.dims != dims:
            raise ValueError(f"sample {s.sample_id!r} has dims {s.dims}, expected {dims}")
        if len({m.length for m in s.modalities()}) != 1:
            raise ValueError(f"sample {s.sample_id!r} has unequal modality lengths")
    b = len(samples)
    s_max = max(s.length for s in samples)
    arrays = [np.zeros((b, s_max, d), dtype=dtype) for d in dims]
    mask = np.zeros((b, s_max), dtype=np.uint8)
    for i, s in enumerate(samples):
        n = s.length
        for arr, m in zip(arrays, s.modalities()):
            arr[i, :n] = m.features
        mask[i, :n] = 1
    return Batch([s.sample_id for s in samples], arrays[0], arrays[1], arrays[2], mask)


def unpad(batch: Batch) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Inverse of :func:`pad_and_mask`: per-sample (text, audio, video) arrays."""
    out = []
    for i, n in enumerate(batch.lengths):
        out.append((batch.text[i, :n], batch.audio[i, :n], batch.video[i, :n]))
    return out
