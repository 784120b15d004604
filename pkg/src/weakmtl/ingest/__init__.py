from .batching import Batch, EmptySegmentError, pad_and_mask, reduce_segments, unpad
from .container import (
    ContainerError,
    DimensionMismatchError,
    InvalidDatasetError,
    TruncatedPayloadError,
    VersionMismatchError,
    attach_label_set,
    dataset_checksum,
    read_container,
    read_manifest,
    write_container,
)
from .synthetic import SyntheticConfig, SyntheticTask, SyntheticWorld, categorical_indices, generate_synthetic
