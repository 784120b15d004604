"""On-disk dataset container.

Layout of a container directory::

    manifest.json                      # human-readable index, format_version 1
    <split>.features.bin               # per split: for each sample, text|audio|video
                                       # rows as little-endian float32, row-major
    <task>.<provenance>.labels.bin     # per label set: little-endian float64 rows (n, d_y)

Every sample record in the manifest lists its sequence length and the byte
offset of each modality block inside its split file.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np

from ..datamodel import (
    MODALITIES,
    SPLITS,
    Dataset,
    LabelSet,
    Provenance,
    Sample,
    TaskSpec,
    validate_dataset,
)

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
FEATURE_DTYPE = np.dtype("<f4")
LABEL_DTYPE = np.dtype("<f8")
UNASSIGNED = "unassigned"


class ContainerError(Exception):
    code = "container_error"


class VersionMismatchError(ContainerError):
    code = "version_mismatch"


class TruncatedPayloadError(ContainerError):
    code = "truncated_payload"


class DimensionMismatchError(ContainerError):
    code = "dimension_mismatch"


class InvalidDatasetError(ContainerError):
    code = "invalid_dataset"


def _groups(dataset: Dataset) -> dict[str, tuple[str, ...]]:
    groups = {split: tuple(dataset.splits.get(split, ())) for split in SPLITS}
    assigned = {sid for ids in groups.values() for sid in ids}
    rest = tuple(sid for sid in dataset.samples if sid not in assigned)
    if rest:
        groups[UNASSIGNED] = rest
    return groups


def write_container(dataset: Dataset, path) -> Path:
    """Write ``dataset`` to directory ``path`` (created if needed)."""
    problems = validate_dataset(dataset)
    if problems:
        raise InvalidDatasetError("; ".join(str(p) for p in problems[:5]))
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    dims = dataset.dims or (0, 0, 0)

    split_index = {}
    files = {}
    for group, ids in _groups(dataset).items():
        fname = f"{group}.features.bin"
        records = []
        offset = 0
        with open(root / fname, "wb") as fh:
            for sid in ids:
                sample = dataset.samples[sid]
                offsets = {}
                for m in sample.modalities():
                    payload = np.ascontiguousarray(m.features, dtype=FEATURE_DTYPE).tobytes(order="C")
                    offsets[m.modality.value] = offset
                    fh.write(payload)
                    offset += len(payload)
                rec = {"sample_id": sid, "length": sample.length, "offsets": offsets}
                if sample.metadata:
                    rec["metadata"] = {k: float(v) for k, v in sample.metadata.items()}
                records.append(rec)
        split_index[group] = records
        files[group] = {"file": fname, "bytes": offset}

    label_entries = []
    for ls in dataset.label_sets:
        fname = f"{ls.task.task_id}.{ls.provenance.value}.labels.bin"
        ids = list(ls.labels)
        mat = np.zeros((len(ids), ls.task.output_dim), dtype=LABEL_DTYPE)
        for i, sid in enumerate(ids):
            mat[i] = ls.labels[sid]
        (root / fname).write_bytes(mat.tobytes(order="C"))
        label_entries.append(
            {
                "task": ls.task.to_dict(),
                "provenance": ls.provenance.value,
                "confidence": float(ls.confidence),
                "source": ls.source,
                "file": fname,
                "dtype": LABEL_DTYPE.str,
                "sample_ids": ids,
            }
        )

    manifest = {
        "format_version": FORMAT_VERSION,
        "name": dataset.name,
        "dims": {m: int(d) for m, d in zip(MODALITIES, dims)},
        "feature_dtype": FEATURE_DTYPE.str,
        "splits": split_index,
        "files": files,
        "label_sets": label_entries,
    }
    tmp = root / (MANIFEST_NAME + ".tmp")
    tmp.write_text(json.dumps(manifest, indent=1))
    os.replace(tmp, root / MANIFEST_NAME)
    return root


def read_manifest(path) -> dict:
    root = Path(path)
    try:
        manifest = json.loads((root / MANIFEST_NAME).read_text())
    except FileNotFoundError as exc:
        raise ContainerError(f"no {MANIFEST_NAME} in {root}") from exc
    except json.JSONDecodeError as exc:
        raise ContainerError(f"malformed {MANIFEST_NAME} in {root}: {exc}") from exc
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"unsupported container format_version {version!r} (expected {FORMAT_VERSION})")
    return manifest


def _check_record(rec: dict, dims: tuple[int, int, int], group: str):
    n = int(rec["length"])
    offs = rec["offsets"]
    expected = offs["text"]
    for m, d in zip(MODALITIES, dims):
        if offs[m] != expected:
            raise DimensionMismatchError(
                f"{group}/{rec['sample_id']}: {m} block starts at byte {offs[m]}, "
                f"but manifest dims {dims} put it at {expected}"
            )
        expected += n * d * FEATURE_DTYPE.itemsize
    return expected


def read_container(path) -> Dataset:
    root = Path(path)
    manifest = read_manifest(root)
    dims = tuple(int(manifest["dims"][m]) for m in MODALITIES)
    if np.dtype(manifest.get("feature_dtype", FEATURE_DTYPE.str)) != FEATURE_DTYPE:
        raise ContainerError(f"unsupported feature dtype {manifest['feature_dtype']!r}")

    samples: dict[str, Sample] = {}
    splits: dict[str, tuple[str, ...]] = {}
    for group, records in manifest["splits"].items():
        info = manifest["files"][group]
        raw = (root / info["file"]).read_bytes()
        declared = int(info["bytes"])
        end = 0
        for rec in records:
            end = _check_record(rec, dims, group)
        if records and end != declared:
            raise DimensionMismatchError(f"{group}: sample index ends at byte {end}, manifest declares {declared}")
        if len(raw) < declared:
            raise TruncatedPayloadError(f"{info['file']}: {len(raw)} bytes on disk, manifest declares {declared}")
        if len(raw) > declared:
            raise DimensionMismatchError(f"{info['file']}: {len(raw)} bytes on disk, manifest declares {declared}")
        for rec in records:
            n = int(rec["length"])
            arrays = []
            for m, d in zip(MODALITIES, dims):
                arr = np.frombuffer(raw, dtype=FEATURE_DTYPE, count=n * d, offset=rec["offsets"][m])
                arrays.append(arr.reshape(n, d).copy())
            sid = rec["sample_id"]
            samples[sid] = Sample.from_arrays(sid, *arrays, metadata=rec.get("metadata"))
        if group != UNASSIGNED:
            splits[group] = tuple(rec["sample_id"] for rec in records)

    label_sets = []
    for entry in manifest["label_sets"]:
        task = TaskSpec.from_dict(entry["task"])
        ids = entry["sample_ids"]
        dtype = np.dtype(entry.get("dtype", LABEL_DTYPE.str))
        raw = (root / entry["file"]).read_bytes()
        expected = len(ids) * task.output_dim * dtype.itemsize
        if len(raw) < expected:
            raise TruncatedPayloadError(f"{entry['file']}: {len(raw)} bytes, expected {expected}")
        if len(raw) != expected:
            raise DimensionMismatchError(f"{entry['file']}: {len(raw)} bytes, expected {expected} for d_y={task.output_dim}")
        mat = np.frombuffer(raw, dtype=dtype).reshape(len(ids), task.output_dim).astype(np.float64)
        labels = {sid: mat[i].copy() for i, sid in enumerate(ids)}
        label_sets.append(LabelSet(task, Provenance(entry["provenance"]), labels, entry["confidence"], entry.get("source")))

    return Dataset(manifest["name"], samples, splits, tuple(label_sets))


def attach_label_set(path, label_set: LabelSet) -> Dataset:
    """Add ``label_set`` to the container at ``path`` and rewrite its manifest."""
    dataset = read_container(path).with_label_set(label_set)
    write_container(dataset, path)
    return dataset


def dataset_checksum(dataset: Dataset) -> str:
    """SHA-256 over features (float32, in split order) and labels."""
    h = hashlib.sha256()
    for group, ids in _groups(dataset).items():
        h.update(group.encode())
        for sid in ids:
            h.update(sid.encode())
            for m in dataset.samples[sid].modalities():
                h.update(np.ascontiguousarray(m.features, dtype=FEATURE_DTYPE).tobytes())
    for ls in dataset.label_sets:
        h.update(repr((ls.key, float(ls.confidence), ls.source)).encode())
        for sid, y in ls.labels.items():
            h.update(sid.encode())
            h.update(np.asarray(y, dtype=LABEL_DTYPE).tobytes())
    return h.hexdigest()
