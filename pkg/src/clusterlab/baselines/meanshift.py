"""Mean shift with a flat kernel; discovers its own cluster count."""

from __future__ import annotations

import time

import numpy as np

from .common import ClusteringResult, make_result

MAX_ITERS = 500


def mean_shift(points, bandwidth: float) -> ClusteringResult:
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    t0 = time.perf_counter()

    h2 = bandwidth * bandwidth
    positions = points.copy()
    active = np.ones(n, dtype=bool)
    for _ in range(MAX_ITERS):
        if not np.any(active):
            break
        idx = np.flatnonzero(active)
        diff = positions[idx][:, None, :] - points[None, :, :]
        within = np.sum(diff * diff, axis=2) <= h2
        counts = within.sum(axis=1)
        # Every point is within its own window, so counts >= 1.
        means = (within @ points) / counts[:, None]
        shift = np.linalg.norm(means - positions[idx], axis=1)
        positions[idx] = means
        active[idx] = shift >= 1e-3 * bandwidth

    # Merge modes closer than half a bandwidth, first-come canonical.
    mode_centers = []
    labels = np.empty(n, dtype=np.int64)
    merge2 = (bandwidth / 2.0) ** 2
    for i in range(n):
        assigned = -1
        for mi, center in enumerate(mode_centers):
            if np.sum((positions[i] - center) ** 2) <= merge2:
                assigned = mi
                break
        if assigned < 0:
            mode_centers.append(positions[i].copy())
            assigned = len(mode_centers) - 1
        labels[i] = assigned

    return make_result(
        labels,
        method="MS",
        params={"bandwidth": bandwidth, "modes": len(mode_centers)},
        runtime=time.perf_counter() - t0,
    )
