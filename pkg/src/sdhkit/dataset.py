"""Loading, normalization, and synthesis of labeled feature datasets.

Features are stored column-major: one sample per column, so a dataset with
D-dimensional features and N samples is a (D, N) matrix. Labels are integer
class indices; one-hot label matrices are materialized only inside the
operations that need them.
"""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

NORMALIZE_MODES = ("unit_norm", "zero_mean_unit_norm")


@dataclass(frozen=True)
class RawDataset:
    """Labeled feature vectors, one column per sample."""

    features: np.ndarray  # (dim, sample_count) float64, finite
    labels: np.ndarray    # (sample_count,) int64 in [0, class_count)
    class_count: int

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.ndim != 2:
            raise ValueError(f"features must be 2-D (dim x samples), got shape {features.shape}")
        if labels.ndim != 1:
            raise ValueError(f"labels must be 1-D, got shape {labels.shape}")
        if features.shape[1] != labels.shape[0]:
            raise ValueError(
                f"sample count mismatch: {features.shape[1]} feature columns vs {labels.shape[0]} labels"
            )
        if features.shape[1] < 1:
            raise ValueError("dataset must contain at least one sample")
        if not np.isfinite(features).all():
            raise ValueError("features contain non-finite values")
        if self.class_count < 1:
            raise ValueError(f"class_count must be positive, got {self.class_count}")
        if labels.min() < 0 or labels.max() >= self.class_count:
            raise ValueError(f"label out of range [0, {self.class_count})")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return self.features.shape[0]

    @property
    def sample_count(self) -> int:
        return self.features.shape[1]


def validate_training_labels(dataset: RawDataset) -> None:
    """Check that every class in [0, class_count) has at least one sample.

    Loaders accept sparse test splits; training entry points call this.
    """
    present = np.zeros(dataset.class_count, dtype=bool)
    present[dataset.labels] = True
    if not present.all():
        missing = int(np.flatnonzero(~present)[0])
        raise ValueError(f"class {missing} has no samples in the training set")


def _open_maybe_gzip(path: str | Path):
    # IDX files are commonly distributed gzipped; sniff the 2-byte gzip magic.
    f = open(path, "rb")
    head = f.read(2)
    f.seek(0)
    if head == b"\x1f\x8b":
        return gzip.open(f)
    return f


def _read_exact(f, nbytes: int, path, what: str) -> bytes:
    offset = f.tell()
    data = f.read(nbytes)
    if len(data) != nbytes:
        raise ValueError(
            f"{path}: truncated file reading {what} at byte offset {offset}: "
            f"wanted {nbytes} bytes, got {len(data)}"
        )
    return data


def _read_be32(f, path, what: str) -> int:
    return struct.unpack(">i", _read_exact(f, 4, path, what))[0]


def read_idx_images(path: str | Path) -> np.ndarray:
    """Read an IDX image file into a (count, rows, cols) uint8 array.

    Layout (big endian): magic 0x00000803, count, rows, cols as 32-bit
    integers, then count*rows*cols unsigned pixel bytes.
    """
    with _open_maybe_gzip(path) as f:
        magic = _read_be32(f, path, "magic number")
        if magic != IDX_IMAGES_MAGIC:
            raise ValueError(
                f"{path}: bad magic number at byte offset 0: "
                f"expected {IDX_IMAGES_MAGIC:#010x}, got {magic:#010x}"
            )
        count = _read_be32(f, path, "image count")
        rows = _read_be32(f, path, "row count")
        cols = _read_be32(f, path, "column count")
        if count < 0 or rows <= 0 or cols <= 0:
            raise ValueError(f"{path}: invalid dimensions (count={count}, rows={rows}, cols={cols})")
        raw = _read_exact(f, count * rows * cols, path, "pixel data")
    return np.frombuffer(raw, dtype=np.uint8).reshape(count, rows, cols)


def read_idx_labels(path: str | Path) -> np.ndarray:
    """Read an IDX label file into a (count,) uint8 array.

    Layout (big endian): magic 0x00000801, count, then count label bytes.
    """
    with _open_maybe_gzip(path) as f:
        magic = _read_be32(f, path, "magic number")
        if magic != IDX_LABELS_MAGIC:
            raise ValueError(
                f"{path}: bad magic number at byte offset 0: "
                f"expected {IDX_LABELS_MAGIC:#010x}, got {magic:#010x}"
            )
        count = _read_be32(f, path, "label count")
        if count < 0:
            raise ValueError(f"{path}: invalid label count {count}")
        raw = _read_exact(f, count, path, "label data")
    return np.frombuffer(raw, dtype=np.uint8)


def write_idx_images(path: str | Path, images: np.ndarray) -> None:
    """Write a (count, rows, cols) uint8 array as an IDX image file."""
    images = np.asarray(images, dtype=np.uint8)
    if images.ndim != 3:
        raise ValueError(f"images must be (count, rows, cols), got shape {images.shape}")
    with open(path, "wb") as f:
        f.write(struct.pack(">iiii", IDX_IMAGES_MAGIC, *images.shape))
        f.write(images.tobytes())


def write_idx_labels(path: str | Path, labels: np.ndarray) -> None:
    """Write a (count,) array of labels in [0, 255] as an IDX label file."""
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ValueError(f"labels must be 1-D, got shape {labels.shape}")
    with open(path, "wb") as f:
        f.write(struct.pack(">ii", IDX_LABELS_MAGIC, labels.shape[0]))
        f.write(labels.astype(np.uint8).tobytes())


def load_mnist(images_path: str | Path, labels_path: str | Path,
               limit: int | None = None) -> RawDataset:
    """Load an MNIST-style IDX image/label pair as a 10-class dataset.

    Pixels are flattened row-wise to D = rows*cols features and scaled to
    [0, 1] by dividing by 255. `limit` truncates in file order.
    """
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise ValueError(
            f"count mismatch: {images_path} declares {images.shape[0]} images "
            f"(byte offset 4) but {labels_path} declares {labels.shape[0]} labels (byte offset 4)"
        )
    if limit is not None:
        if limit == 0:
            raise ValueError("empty dataset requested (limit=0)")
        if limit < 0:
            raise ValueError(f"limit must be positive, got {limit}")
        images = images[:limit]
        labels = labels[:limit]
    if labels.size and labels.max() > 9:
        raise ValueError(f"label out of range [0, 10): found {int(labels.max())}")
    count = images.shape[0]
    features = images.reshape(count, -1).T.astype(np.float64) / 255.0
    return RawDataset(features=features, labels=labels.astype(np.int64), class_count=10)


def _parse_csv_matrix(path: str | Path) -> np.ndarray:
    rows = []
    ncols = None
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if ncols is None:
                ncols = len(cells)
            elif len(cells) != ncols:
                raise ValueError(f"{path}: row {lineno} has {len(cells)} columns, expected {ncols}")
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                bad = next(c for c in cells if not _is_float(c))
                raise ValueError(f"{path}: row {lineno} has non-numeric cell {bad!r}") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return np.asarray(rows, dtype=np.float64)


def _is_float(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def load_csv(features_path: str | Path, labels_path: str | Path,
             class_count: int | None = None) -> RawDataset:
    """Load precomputed features (one sample per row) and integer labels.

    The feature file fixes D by its column count; the label file has one
    integer per row. When `class_count` is omitted it is inferred as
    max(label) + 1.
    """
    data = _parse_csv_matrix(features_path)
    raw_labels = _parse_csv_matrix(labels_path)
    if raw_labels.shape[1] != 1:
        raise ValueError(f"{labels_path}: expected one label per row, got {raw_labels.shape[1]} columns")
    labels = raw_labels[:, 0]
    if not np.all(labels == np.round(labels)):
        raise ValueError(f"{labels_path}: labels must be integers")
    labels = labels.astype(np.int64)
    if data.shape[0] != labels.shape[0]:
        raise ValueError(
            f"row count mismatch: {data.shape[0]} feature rows vs {labels.shape[0]} labels"
        )
    if class_count is None:
        if labels.min() < 0:
            raise ValueError("label out of range: negative label")
        class_count = int(labels.max()) + 1
    elif labels.size and (labels.min() < 0 or labels.max() >= class_count):
        raise ValueError(f"label out of range [0, {class_count})")
    return RawDataset(features=data.T, labels=labels, class_count=class_count)


def synth_blobs(classes: int, per_class: int, dim: int, spread: float,
                seed: int) -> RawDataset:
    """Gaussian blobs: class k is drawn around a distinct random center.

    Pure function of its arguments; the same seed yields a bitwise-identical
    dataset.
    """
    if classes < 1 or per_class < 1 or dim < 1:
        raise ValueError(
            f"classes, per_class, dim must all be >= 1, got ({classes}, {per_class}, {dim})"
        )
    if spread < 0:
        raise ValueError(f"spread must be non-negative, got {spread}")
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((classes, dim))
    noise = rng.standard_normal((classes, per_class, dim))
    samples = centers[:, None, :] + spread * noise
    features = samples.reshape(classes * per_class, dim).T.copy()
    labels = np.repeat(np.arange(classes, dtype=np.int64), per_class)
    return RawDataset(features=features, labels=labels, class_count=classes)


def normalize(dataset: RawDataset, mode: str = "unit_norm") -> RawDataset:
    """Normalize sample columns.

    unit_norm: scale each column to Euclidean norm 1. zero_mean_unit_norm:
    subtract the per-dimension mean over samples first, then unit-normalize.
    """
    if mode not in NORMALIZE_MODES:
        raise ValueError(f"unknown normalization mode {mode!r}; expected one of {NORMALIZE_MODES}")
    features = dataset.features
    if mode == "zero_mean_unit_norm":
        features = features - features.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(features, axis=0)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ValueError(f"cannot unit-normalize: sample column {int(zero[0])} has zero norm")
    return RawDataset(features=features / norms, labels=dataset.labels,
                      class_count=dataset.class_count)
