"""Numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports and ``WEAKMTL_NUMBA`` is not set to
``0``. Both paths return identical integer counts; float kernels agree to
rounding (the numba loops accumulate in the same order as the numpy code
wherever the order matters for determinism).
"""

from __future__ import annotations

import os

import numpy as np

_ENV_FLAG = "WEAKMTL_NUMBA"


def _numba_requested() -> bool:
    return os.environ.get(_ENV_FLAG, "1").strip().lower() not in ("0", "false", "no", "off")


try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and _numba_requested()


# numpy reference implementations


def confusion_counts_numpy(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    pred = pred.astype(bool)
    truth = truth.astype(bool)
    tp = np.count_nonzero(pred & truth)
    fp = np.count_nonzero(pred & ~truth)
    tn = np.count_nonzero(~pred & ~truth)
    fn = np.count_nonzero(~pred & truth)
    return np.array([tp, fp, tn, fn], dtype=np.int64)


def sweep_counts_numpy(scores: np.ndarray, truth: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    truth = truth.astype(bool)
    pred = scores[None, :] >= thresholds[:, None]
    tp = (pred & truth).sum(axis=1)
    fp = (pred & ~truth).sum(axis=1)
    fn = truth.sum() - tp
    tn = (~truth).sum() - fp
    return np.stack([tp, fp, tn, fn], axis=1).astype(np.int64)


def masked_mean_numpy(seq: np.ndarray, mask: np.ndarray) -> np.ndarray:
    m = mask.astype(seq.dtype)
    counts = m.sum(axis=1)
    if np.any(counts == 0):
        raise ValueError("masked mean over an all-masked sequence")
    return (seq * m[:, :, None]).sum(axis=1) / counts[:, None]


def ar1_numpy(innovations: np.ndarray, coef: float) -> np.ndarray:
    out = np.empty_like(innovations)
    prev = np.zeros(innovations.shape[1], dtype=innovations.dtype)
    for i in range(innovations.shape[0]):
        prev = coef * prev + innovations[i]
        out[i] = prev
    return out


# numba loop implementations


def _confusion_counts_loop(pred, truth):
    # branch-free: tally codes 2*p + t, then reorder to [TP, FP, TN, FN]
    tally = np.zeros(4, dtype=np.int64)
    for i in range(pred.shape[0]):
        tally[2 * (pred[i] != 0) + (truth[i] != 0)] += 1
    out = np.empty(4, dtype=np.int64)
    out[0] = tally[3]
    out[1] = tally[2]
    out[2] = tally[0]
    out[3] = tally[1]
    return out


def _sweep_counts_loop(scores, truth, thresholds):
    n_t = thresholds.shape[0]
    out = np.zeros((n_t, 4), dtype=np.int64)
    n_pos = 0
    for i in range(truth.shape[0]):
        if truth[i] != 0:
            n_pos += 1
    n_neg = truth.shape[0] - n_pos
    for k in range(n_t):
        tau = thresholds[k]
        tp = 0
        fp = 0
        for i in range(scores.shape[0]):
            if scores[i] >= tau:
                if truth[i] != 0:
                    tp += 1
                else:
                    fp += 1
        out[k, 0] = tp
        out[k, 1] = fp
        out[k, 2] = n_neg - fp
        out[k, 3] = n_pos - tp
    return out


def _masked_mean_loop(seq, mask):
    b, s, d = seq.shape
    out = np.zeros((b, d), dtype=seq.dtype)
    for i in range(b):
        count = 0.0
        for j in range(s):
            if mask[i, j] != 0:
                count += 1.0
                for k in range(d):
                    out[i, k] += seq[i, j, k]
        if count == 0.0:
            raise ValueError("masked mean over an all-masked sequence")
        for k in range(d):
            out[i, k] /= count
    return out


def _ar1_loop(innovations, coef):
    s, q = innovations.shape
    out = np.empty_like(innovations)
    for k in range(q):
        prev = 0.0
        for i in range(s):
            prev = coef * prev + innovations[i, k]
            out[i, k] = prev
    return out


if numba is not None:
    _confusion_counts_jit = numba.njit(cache=True)(_confusion_counts_loop)
    _sweep_counts_jit = numba.njit(cache=True)(_sweep_counts_loop)
    _masked_mean_jit = numba.njit(cache=True)(_masked_mean_loop)
    _ar1_jit = numba.njit(cache=True)(_ar1_loop)


def confusion_counts(pred, truth, use_numba: bool | None = None) -> np.ndarray:
    """Return ``[TP, FP, TN, FN]`` for boolean-like predictions and targets."""
    pred = np.ascontiguousarray(pred, dtype=np.uint8)
    truth = np.ascontiguousarray(truth, dtype=np.uint8)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise ValueError(f"pred and truth must be equal-length vectors, got {pred.shape} and {truth.shape}")
    if USE_NUMBA if use_numba is None else use_numba:
        return _confusion_counts_jit(pred, truth)
    return confusion_counts_numpy(pred, truth)


def sweep_counts(scores, truth, thresholds, use_numba: bool | None = None) -> np.ndarray:
    """Confusion counts for ``score >= tau`` at every threshold; shape (T, 4)."""
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    truth = np.ascontiguousarray(truth, dtype=np.uint8)
    thresholds = np.ascontiguousarray(thresholds, dtype=np.float64)
    if USE_NUMBA if use_numba is None else use_numba:
        return _sweep_counts_jit(scores, truth, thresholds)
    return sweep_counts_numpy(scores, truth, thresholds)


def masked_mean(seq, mask, use_numba: bool | None = None) -> np.ndarray:
    """Mean over the active steps of each (S, d) sequence in a (B, S, d) batch."""
    seq = np.ascontiguousarray(seq, dtype=np.float64)
    mask = np.ascontiguousarray(mask, dtype=np.uint8)
    if USE_NUMBA if use_numba is None else use_numba:
        return _masked_mean_jit(seq, mask)
    return masked_mean_numpy(seq, mask)


def ar1(innovations, coef: float, use_numba: bool | None = None) -> np.ndarray:
    """AR(1) filter along axis 0: ``x_i = coef * x_{i-1} + e_i`` with ``x_{-1} = 0``."""
    innovations = np.ascontiguousarray(innovations, dtype=np.float64)
    if USE_NUMBA if use_numba is None else use_numba:
        return _ar1_jit(innovations, float(coef))
    return ar1_numpy(innovations, float(coef))
