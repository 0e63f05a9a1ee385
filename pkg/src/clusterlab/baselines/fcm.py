"""Fuzzy c-means with hard labels by membership argmax."""

from __future__ import annotations

import time

import numpy as np

from .common import ClusteringResult, make_result


def fcm_memberships(points: np.ndarray, centers: np.ndarray, m: float) -> np.ndarray:
    """Membership update; rows sum to 1, coincident centers get weight 1."""
    d2 = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    u = np.empty_like(d2)
    zero_rows = np.any(d2 == 0.0, axis=1)
    if np.any(zero_rows):
        u[zero_rows] = 0.0
        hits = np.argmax(d2[zero_rows] == 0.0, axis=1)
        u[np.flatnonzero(zero_rows), hits] = 1.0
    rest = ~zero_rows
    if np.any(rest):
        power = d2[rest] ** (-1.0 / (m - 1.0))
        u[rest] = power / power.sum(axis=1, keepdims=True)
    return u


def fuzzy_cmeans(points, k: int, m: float = 2.0, tol: float = 1e-5,
                 max_iter: int = 300, rng=None) -> ClusteringResult:
    if m <= 1.0:
        raise ValueError("fuzziness m must exceed 1")
    if rng is None:
        rng = np.random.default_rng(0)
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if k > n:
        raise ValueError(f"k={k} exceeds n={n}")
    t0 = time.perf_counter()

    u = rng.uniform(size=(n, k))
    u /= u.sum(axis=1, keepdims=True)
    iters = 0
    for iters in range(1, max_iter + 1):
        um = u ** m
        weight = um.sum(axis=0)
        centers = np.empty((k, points.shape[1]), dtype=np.float64)
        for c in range(k):
            if weight[c] > 0.0:
                centers[c] = um[:, c] @ points / weight[c]
            else:
                centers[c] = points[rng.integers(n)]
        new_u = fcm_memberships(points, centers, m)
        change = float(np.abs(new_u - u).max())
        u = new_u
        if change < tol:
            break

    labels = np.argmax(u, axis=1)
    return make_result(
        labels,
        method="FCM",
        params={"k": k, "m": m, "tol": tol, "iters": iters},
        runtime=time.perf_counter() - t0,
    )
