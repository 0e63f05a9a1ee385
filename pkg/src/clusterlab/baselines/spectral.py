"""Spectral clustering: NJW embedding and recursive normalized cuts.

Both methods share an RBF affinity W = exp(-d^2 / 2 sigma^2) with zero
diagonal. NJW clusters the row-normalized top-k eigenvectors of
D^(-1/2) W D^(-1/2) with k-means; normalized cut recursively bisects
the graph along the second-smallest generalized Laplacian eigenvector,
thresholded where the Ncut objective over the sweep is minimal.

Dense symmetric eigensolves go through numpy's eigh. Above
SUBSAMPLE_LIMIT points, both methods cluster a uniform subsample and
propagate labels to the rest by nearest neighbor.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .common import ClusteringResult, make_result, pairwise_sq_distances
from .kmeans import kmeans_core

SUBSAMPLE_LIMIT = 1500
_EPS_DEGREE = 1e-12


@dataclass(frozen=True)
class AffinityParams:
    sigma: float = 0.0
    sigma_rule: str = "median_heuristic"  # or "fixed"
    median_factor: float = 0.15

    def resolve_sigma(self, points: np.ndarray) -> float:
        if self.sigma_rule == "fixed":
            if self.sigma <= 0:
                raise ValueError("fixed sigma must be positive")
            return float(self.sigma)
        if self.sigma_rule != "median_heuristic":
            raise ValueError(f"unknown sigma_rule {self.sigma_rule!r}")
        d2 = pairwise_sq_distances(points)
        upper = d2[np.triu_indices(len(points), k=1)]
        median = float(np.sqrt(np.median(upper))) if len(upper) else 1.0
        sigma = self.median_factor * median
        return sigma if sigma > 0 else 1.0


def rbf_affinity(points: np.ndarray, sigma: float) -> np.ndarray:
    d2 = pairwise_sq_distances(points)
    w = np.exp(-d2 / (2.0 * sigma * sigma))
    np.fill_diagonal(w, 0.0)
    return w


def _nearest_neighbor_fill(points, labels, known_mask):
    """Assign unlabeled points the label of their nearest labeled point."""
    labels = labels.copy()
    unknown = np.flatnonzero(~known_mask)
    known = np.flatnonzero(known_mask)
    if len(unknown) == 0:
        return labels
    diff = points[unknown][:, None, :] - points[known][None, :, :]
    nearest = np.argmin(np.sum(diff * diff, axis=2), axis=1)
    labels[unknown] = labels[known[nearest]]
    return labels


def _subsample(points, limit, rng):
    n = len(points)
    if n <= limit:
        return None
    return np.sort(rng.choice(n, size=limit, replace=False))


def njw_embed(w: np.ndarray, k: int) -> np.ndarray:
    """Row-normalized top-k eigenvector embedding of D^-1/2 W D^-1/2."""
    degree = w.sum(axis=1)
    inv_sqrt = np.where(degree > _EPS_DEGREE, 1.0 / np.sqrt(np.maximum(degree, _EPS_DEGREE)), 0.0)
    sym = w * inv_sqrt[:, None] * inv_sqrt[None, :]
    _, vecs = np.linalg.eigh(sym)
    embed = vecs[:, -k:]
    norms = np.linalg.norm(embed, axis=1, keepdims=True)
    return embed / np.where(norms > 0, norms, 1.0)


def spectral_njw(points, k: int, affinity: AffinityParams = AffinityParams(),
                 rng=None, restarts: int = 5) -> ClusteringResult:
    if rng is None:
        rng = np.random.default_rng(0)
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if k > n:
        raise ValueError(f"k={k} exceeds n={n}")
    t0 = time.perf_counter()
    sigma = affinity.resolve_sigma(points)

    subset = _subsample(points, SUBSAMPLE_LIMIT, rng)
    work = points if subset is None else points[subset]
    w = rbf_affinity(work, sigma)

    # Isolated points (affinity numerically zero to everything) distort
    # the embedding; solve without them, then attach each to its nearest
    # neighbor's cluster.
    connected = w.sum(axis=1) > _EPS_DEGREE
    if connected.sum() < k:
        raise ValueError("affinity graph too fragmented for requested k")
    embed = njw_embed(w[np.ix_(connected, connected)], k)
    sub_labels = np.full(len(work), -1, dtype=np.int64)
    sub_labels[connected], _, _ = kmeans_core(embed, k, restarts, rng)
    sub_labels = _nearest_neighbor_fill(work, sub_labels, connected)

    if subset is None:
        labels = sub_labels
    else:
        labels = np.full(n, -1, dtype=np.int64)
        labels[subset] = sub_labels
        mask = np.zeros(n, dtype=bool)
        mask[subset] = True
        labels = _nearest_neighbor_fill(points, labels, mask)

    return make_result(
        labels,
        method="NJW",
        params={"k": k, "sigma": sigma},
        runtime=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# Normalized cut


def connected_components(w: np.ndarray) -> np.ndarray:
    n = len(w)
    comp = np.full(n, -1, dtype=np.int64)
    adj = w > _EPS_DEGREE
    next_id = 0
    for start in range(n):
        if comp[start] >= 0:
            continue
        stack = [start]
        comp[start] = next_id
        while stack:
            i = stack.pop()
            for j in np.flatnonzero(adj[i]):
                if comp[j] < 0:
                    comp[j] = next_id
                    stack.append(j)
        next_id += 1
    return comp


def ncut_value(w: np.ndarray, in_a: np.ndarray) -> float:
    """The Ncut objective for a two-way split given by boolean in_a."""
    degrees = w.sum(axis=1)
    vol_a = float(degrees[in_a].sum())
    vol_b = float(degrees[~in_a].sum())
    cut = float(w[np.ix_(in_a, ~in_a)].sum())
    if vol_a <= 0 or vol_b <= 0:
        return np.inf
    return cut / vol_a + cut / vol_b


def _best_threshold_split(w: np.ndarray) -> np.ndarray:
    """Two-way split of the subgraph minimizing Ncut along the Fiedler sweep."""
    degree = w.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(np.maximum(degree, _EPS_DEGREE))
    lap_sym = np.eye(len(w)) - w * inv_sqrt[:, None] * inv_sqrt[None, :]
    _, vecs = np.linalg.eigh(lap_sym)
    fiedler = inv_sqrt * vecs[:, 1]

    order = np.argsort(fiedler, kind="stable")
    w_sorted = w[np.ix_(order, order)]
    deg_sorted = degree[order]
    total_volume = float(deg_sorted.sum())

    # Prefix sweep: after placing the first p points (sorted by the
    # eigenvector) in side A, cut(A,B) = vol(A) - 2*assoc(A,A)/... built
    # incrementally in O(n^2) overall.
    best_p, best_val = 1, np.inf
    assoc_aa = 0.0
    vol_a = 0.0
    for p in range(1, len(w)):
        row = w_sorted[p - 1, : p - 1]
        assoc_aa += 2.0 * float(row.sum())
        vol_a += float(deg_sorted[p - 1])
        vol_b = total_volume - vol_a
        if vol_a <= 0 or vol_b <= 0:
            continue
        cut = vol_a - assoc_aa
        val = cut / vol_a + cut / vol_b
        if val < best_val:
            best_val, best_p = val, p
    in_a = np.zeros(len(w), dtype=bool)
    in_a[order[:best_p]] = True
    return in_a


def normalized_cut(points, k: int, affinity: AffinityParams = AffinityParams(),
                   rng=None) -> ClusteringResult:
    if k < 1:
        raise ValueError("k must be >= 1")
    if rng is None:
        rng = np.random.default_rng(0)
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if k > n:
        raise ValueError(f"k={k} exceeds n={n}")
    t0 = time.perf_counter()
    sigma = affinity.resolve_sigma(points)

    subset = _subsample(points, SUBSAMPLE_LIMIT, rng)
    work = points if subset is None else points[subset]
    w = rbf_affinity(work, sigma)

    comp = connected_components(w)
    parts = [np.flatnonzero(comp == c) for c in range(comp.max() + 1)]
    while len(parts) > k:
        # More components than clusters: absorb the smallest part into
        # the one it is most strongly connected to.
        parts.sort(key=len)
        small = parts.pop(0)
        links = [float(w[np.ix_(small, part)].sum()) for part in parts]
        target = int(np.argmax(links))
        parts[target] = np.concatenate([parts[target], small])
    while len(parts) < k:
        parts.sort(key=len, reverse=True)
        for idx, part in enumerate(parts):
            if len(part) >= 2:
                in_a = _best_threshold_split(w[np.ix_(part, part)])
                parts[idx : idx + 1] = [part[in_a], part[~in_a]]
                break
        else:
            raise ValueError("cannot split further: every part is a single point")

    sub_labels = np.empty(len(work), dtype=np.int64)
    for lab, part in enumerate(parts):
        sub_labels[part] = lab

    if subset is None:
        labels = sub_labels
    else:
        labels = np.full(n, -1, dtype=np.int64)
        labels[subset] = sub_labels
        mask = np.zeros(n, dtype=bool)
        mask[subset] = True
        labels = _nearest_neighbor_fill(points, labels, mask)

    return make_result(
        labels,
        method="SC",
        params={"k": k, "sigma": sigma},
        runtime=time.perf_counter() - t0,
    )
