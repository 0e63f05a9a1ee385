"""Lloyd's k-means with k-means++ seeding and restarts."""

from __future__ import annotations

import time

import numpy as np

from .common import ClusteringResult, make_result

MAX_ITERS = 300


def _plusplus_seed(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    centers = np.empty((k, points.shape[1]), dtype=np.float64)
    centers[0] = points[rng.integers(n)]
    closest = np.sum((points - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            # Every remaining point coincides with a chosen center.
            centers[i] = points[rng.integers(n)]
            continue
        centers[i] = points[rng.choice(n, p=closest / total)]
        closest = np.minimum(closest, np.sum((points - centers[i]) ** 2, axis=1))
    return centers


def _lloyd(points: np.ndarray, centers: np.ndarray):
    k = len(centers)
    labels = None
    for _ in range(MAX_ITERS):
        d2 = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new_labels = np.argmin(d2, axis=1)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            members = points[labels == c]
            if len(members):
                centers[c] = members.mean(axis=0)
            else:
                # Empty cluster: reseed at the point farthest from its center.
                worst = np.argmax(np.take_along_axis(d2, labels[:, None], axis=1)[:, 0])
                centers[c] = points[worst]
                labels[worst] = c
    d2 = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    labels = np.argmin(d2, axis=1)
    sse = float(np.take_along_axis(d2, labels[:, None], axis=1).sum())
    return labels, centers, sse


def kmeans_core(points: np.ndarray, k: int, restarts: int, rng: np.random.Generator):
    """Best-of-restarts k-means; returns (labels, centers, sse)."""
    points = np.asarray(points, dtype=np.float64)
    if k > len(points):
        raise ValueError(f"k={k} exceeds n={len(points)}")
    best = None
    for _ in range(restarts):
        labels, centers, sse = _lloyd(points, _plusplus_seed(points, k, rng))
        if best is None or sse < best[2]:
            best = (labels, centers, sse)
    return best


def kmeans(points, k: int, restarts: int = 10, rng=None) -> ClusteringResult:
    if rng is None:
        rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    labels, _, sse = kmeans_core(points, k, restarts, rng)
    return make_result(
        labels,
        method="kM",
        params={"k": k, "restarts": restarts, "sse": sse},
        runtime=time.perf_counter() - t0,
    )
