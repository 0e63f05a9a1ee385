"""Shared types and helpers for the clustering algorithms."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class ClusteringResult:
    """Uniform return type for every clustering method.

    labels are contiguous ids starting at 0; k_found is how many
    distinct clusters the method emitted (not the k it was asked for).
    """

    labels: np.ndarray
    k_found: int
    method: str
    params_used: dict = field(default_factory=dict)
    runtime: float = 0.0

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)


def canonical_labels(raw) -> np.ndarray:
    """Relabel to contiguous ids 0..k-1 in order of first appearance."""
    raw = np.asarray(raw)
    seen = {}
    out = np.empty(len(raw), dtype=np.int64)
    for i, lab in enumerate(raw):
        key = int(lab)
        if key not in seen:
            seen[key] = len(seen)
        out[i] = seen[key]
    return out


def make_result(raw_labels, method: str, params: dict = None, runtime: float = 0.0) -> ClusteringResult:
    labels = canonical_labels(raw_labels)
    k = int(labels.max()) + 1 if len(labels) else 0
    return ClusteringResult(
        labels=labels,
        k_found=k,
        method=method,
        params_used=dict(params or {}),
        runtime=runtime,
    )


def pairwise_sq_distances(points: np.ndarray) -> np.ndarray:
    """Full n x n matrix of squared Euclidean distances."""
    p = np.asarray(points, dtype=np.float64)
    sq = np.sum(p * p, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (p @ p.T)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    return d2


def pairwise_distances(points: np.ndarray) -> np.ndarray:
    return np.sqrt(pairwise_sq_distances(points))
