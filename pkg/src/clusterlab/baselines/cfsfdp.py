"""Clustering by fast search and find of density peaks (CFSFDP).

Local density rho uses a Gaussian kernel with cutoff distance d_c; delta
is the distance to the nearest point of higher density, with density
ties broken toward the lower index so the nearest-higher chain stays
acyclic. Centers are the q points nearest the corner (1,1) of the
min-max-normalized (rho, delta) decision graph, and every other point
inherits the label of its nearest higher-density neighbor, walking in
descending-density order.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .common import ClusteringResult, make_result, pairwise_distances


@dataclass(frozen=True)
class CfsfdpParams:
    q: int = 2
    d_c: float = 0.0  # 0 means: use the percentile heuristic
    neighbor_fraction: float = 0.02

    def validate(self) -> None:
        if self.q < 1:
            raise ValueError("q must be >= 1")
        if self.d_c < 0:
            raise ValueError("d_c must be positive (or 0 for the heuristic)")
        if not 0.0 < self.neighbor_fraction < 1.0:
            raise ValueError("neighbor_fraction must be in (0,1)")


@dataclass
class DensityPeaks:
    rho: np.ndarray
    delta: np.ndarray
    nearest_higher: np.ndarray


def cutoff_distance(dist: np.ndarray, neighbor_fraction: float) -> float:
    """d_c at the given percentile of the sorted pairwise distances."""
    n = len(dist)
    upper = dist[np.triu_indices(n, k=1)]
    if len(upper) == 0:
        return 1.0
    ordered = np.sort(upper)
    pos = int(round(neighbor_fraction * len(ordered)))
    pos = min(max(pos, 1), len(ordered))
    d_c = float(ordered[pos - 1])
    if d_c <= 0.0:
        positive = ordered[ordered > 0]
        d_c = float(positive[0]) if len(positive) else 1.0
    return d_c


def density_peaks(dist: np.ndarray, d_c: float) -> DensityPeaks:
    """Compute (rho, delta, nearest_higher) from a full distance matrix."""
    n = len(dist)
    ratio = dist / d_c
    gauss = np.exp(-(ratio * ratio))
    np.fill_diagonal(gauss, 0.0)
    rho = gauss.sum(axis=1)

    # Descending density; equal densities rank the lower index higher.
    order = np.lexsort((np.arange(n), -rho))
    delta = np.empty(n, dtype=np.float64)
    nearest = np.empty(n, dtype=np.int64)
    top = order[0]
    delta[top] = float(dist.max())
    nearest[top] = top
    for pos in range(1, n):
        i = order[pos]
        higher = order[:pos]
        d_row = dist[i, higher]
        j = int(np.argmin(d_row))
        delta[i] = float(d_row[j])
        nearest[i] = higher[j]
    return DensityPeaks(rho=rho, delta=delta, nearest_higher=nearest)


def _minmax(v: np.ndarray) -> np.ndarray:
    span = v.max() - v.min()
    if span <= 0:
        return np.zeros_like(v)
    return (v - v.min()) / span


def select_centers(peaks: DensityPeaks, q: int) -> np.ndarray:
    rho_n = _minmax(peaks.rho)
    delta_n = _minmax(peaks.delta)
    corner_dist = np.sqrt((1.0 - rho_n) ** 2 + (1.0 - delta_n) ** 2)
    return np.argsort(corner_dist, kind="stable")[:q]


def cfsfdp(points, params: CfsfdpParams):
    """Returns (ClusteringResult, DensityPeaks)."""
    params.validate()
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if params.q > n:
        raise ValueError(f"q={params.q} exceeds n={n}")
    t0 = time.perf_counter()

    dist = pairwise_distances(points)
    d_c = params.d_c if params.d_c > 0 else cutoff_distance(dist, params.neighbor_fraction)
    peaks = density_peaks(dist, d_c)
    centers = select_centers(peaks, params.q)

    labels = np.full(n, -1, dtype=np.int64)
    for lab, c in enumerate(centers):
        labels[c] = lab
    order = np.lexsort((np.arange(n), -peaks.rho))
    for i in order:
        if labels[i] < 0:
            labels[i] = labels[peaks.nearest_higher[i]]

    result = make_result(
        labels,
        method="CFSFDP",
        params={"q": params.q, "d_c": d_c},
        runtime=time.perf_counter() - t0,
    )
    return result, peaks
