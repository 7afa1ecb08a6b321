"""RBF anchor feature map.

Original features are converted to M-dimensional kernel features: component m
of the transformed vector is exp(-||x - a_m||^2 / sigma) against anchor a_m,
where the anchors are training samples chosen uniformly at random.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import RawDataset


@dataclass(frozen=True)
class KernelMap:
    """Fitted anchor set; immutable after `fit_anchors`."""

    anchors: np.ndarray  # (source_dim, anchor_count) float64
    sigma: float

    def __post_init__(self):
        anchors = np.asarray(self.anchors, dtype=np.float64)
        if anchors.ndim != 2 or anchors.shape[1] < 1:
            raise ValueError(f"anchors must be a (dim, count) matrix, got shape {anchors.shape}")
        if not np.isfinite(anchors).all():
            raise ValueError("anchors contain non-finite values")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        object.__setattr__(self, "anchors", anchors)

    @property
    def source_dim(self) -> int:
        return self.anchors.shape[0]

    @property
    def anchor_count(self) -> int:
        return self.anchors.shape[1]


def fit_anchors(dataset: RawDataset, anchor_count: int, sigma: float,
                seed: int) -> KernelMap:
    """Draw `anchor_count` distinct training samples as anchors.

    Sampling is uniform without replacement and deterministic for a fixed
    seed.
    """
    if anchor_count < 1:
        raise ValueError(f"anchor_count must be >= 1, got {anchor_count}")
    if anchor_count > dataset.sample_count:
        raise ValueError(
            f"anchor_count {anchor_count} exceeds sample count {dataset.sample_count}"
        )
    rng = np.random.default_rng(seed)
    idx = rng.choice(dataset.sample_count, size=anchor_count, replace=False)
    return KernelMap(anchors=dataset.features[:, idx].copy(), sigma=float(sigma))


def transform(kmap: KernelMap, samples: np.ndarray, *, block: int = 4096) -> np.ndarray:
    """Map (D, K) samples to (M, K) kernel features.

    Entry (m, k) is exp(-||x_k - a_m||^2 / sigma), so values lie in (0, 1]
    and a sample equal to anchor a_m maps to exactly 1 in component m.
    Squared distances use the Gram-matrix expansion blockwise; entries that
    land within rounding error of zero are recomputed by direct differencing
    so coincident pairs come out exactly zero.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2:
        raise ValueError(f"samples must be a (dim, count) matrix, got shape {samples.shape}")
    if samples.shape[0] != kmap.source_dim:
        raise ValueError(
            f"dimension mismatch: samples have dim {samples.shape[0]}, "
            f"kernel map expects {kmap.source_dim}"
        )
    anchors = kmap.anchors
    anchor_sq = np.einsum("dm,dm->m", anchors, anchors)
    out = np.empty((kmap.anchor_count, samples.shape[1]))
    for start in range(0, samples.shape[1], block):
        chunk = samples[:, start:start + block]
        chunk_sq = np.einsum("dk,dk->k", chunk, chunk)
        sq = anchor_sq[:, None] + chunk_sq[None, :] - 2.0 * (anchors.T @ chunk)
        np.maximum(sq, 0.0, out=sq)
        near = sq <= 1e-12 * (anchor_sq[:, None] + chunk_sq[None, :])
        for m, k in zip(*np.nonzero(near)):
            diff = anchors[:, m] - chunk[:, k]
            sq[m, k] = diff @ diff
        out[:, start:start + block] = np.exp(-sq / kmap.sigma)
    return out
