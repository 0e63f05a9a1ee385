"""Scene generation: shape scenes, Gaussian mixtures, labeling, noise.

Ground-truth labels follow a top-down convention: the cluster containing
the topmost point (minimum y, ties broken by minimum x) gets label 0, the
next cluster down gets label 1, and so on. Labels are therefore
order-normalized and independent of object shape. The `label_order`
switch on the scene specs replaces that convention with a random
permutation, reproducing the random-relabeling control condition.
"""

from __future__ import annotations

import numpy as np

from .. import rng as rngmod
from .raster import rasterize
from .shapes import ShapePlacementError, half_extents, sample_shape_points
from .types import (
    BACKGROUND,
    GaussianSceneSpec,
    PointSet,
    ShapeSceneSpec,
    Stimulus,
)

_PLACEMENT_RETRIES = 100
_EDGE_EPS = 1e-6


class GenerationError(RuntimeError):
    """Scene generation could not satisfy its spec."""


class NoiseError(ValueError):
    """Noise injection asked for more pixels than the background holds."""


def assign_topdown_labels(clusters) -> PointSet:
    """Merge per-cluster point lists into one labeled PointSet.

    Clusters are sorted ascending by (min y, min x) and labeled 0..k-1 in
    that order; points are concatenated in the same order, so any
    permutation of the input clusters yields an identical result.
    """
    if not clusters:
        raise ValueError("need at least one cluster")
    arrays = [np.asarray(c, dtype=np.float64).reshape(-1, 2) for c in clusters]
    if any(len(a) == 0 for a in arrays):
        raise ValueError("clusters must be non-empty")
    keys = [(a[:, 1].min(), a[:, 0].min()) for a in arrays]
    order = sorted(range(len(arrays)), key=lambda i: keys[i])
    points = np.concatenate([arrays[i] for i in order])
    labels = np.concatenate(
        [np.full(len(arrays[i]), lab, dtype=np.int64) for lab, i in enumerate(order)]
    )
    return PointSet(points=points, labels=labels, k=len(arrays))


def _apply_label_order(ps: PointSet, label_order: str, rng: np.random.Generator) -> PointSet:
    if label_order == "topdown":
        return ps
    perm = rng.permutation(ps.k)
    return PointSet(points=ps.points, labels=perm[ps.labels], k=ps.k)


def generate_shape_stimulus(spec: ShapeSceneSpec, rng: np.random.Generator = None) -> Stimulus:
    """Generate one shape scene per the spec.

    Each of k objects independently samples kind, scale, density, rotation,
    and translation; placement failures are resampled up to a bounded
    number of retries.
    """
    spec.validate()
    if rng is None:
        rng = rngmod.stream(spec.seed, "shape-stimulus")
    size = spec.image_size
    k = int(rng.integers(spec.object_count_range[0], spec.object_count_range[1] + 1))
    kinds = sorted(spec.shapes, key=lambda s: s.value)
    shared_kind = kinds[rng.integers(len(kinds))] if spec.same_shape else None

    clusters = []
    for _ in range(k):
        for attempt in range(_PLACEMENT_RETRIES):
            kind = shared_kind if shared_kind is not None else kinds[rng.integers(len(kinds))]
            scale = float(rng.uniform(spec.scale_range[0], spec.scale_range[1]))
            density = int(rng.integers(spec.density_range[0], spec.density_range[1] + 1))
            theta = float(rng.uniform(0.0, 2.0 * np.pi))
            ex, ey = half_extents(kind, scale, theta)
            lo_x, hi_x = ex, size - ex - _EDGE_EPS
            lo_y, hi_y = ey, size - ey - _EDGE_EPS
            if lo_x >= hi_x or lo_y >= hi_y:
                continue  # cannot fit at this scale/rotation, resample
            tx = float(rng.uniform(lo_x, hi_x))
            ty = float(rng.uniform(lo_y, hi_y))
            try:
                ps = sample_shape_points(kind, scale, density, theta, (tx, ty), rng, size)
            except ShapePlacementError:
                continue
            clusters.append(ps.points)
            break
        else:
            raise GenerationError(
                f"could not place object after {_PLACEMENT_RETRIES} attempts; spec too tight"
            )

    labeled = _apply_label_order(assign_topdown_labels(clusters), spec.label_order, rng)
    image, gt = rasterize(labeled, size)
    return Stimulus(point_set=labeled, image=image, gt_label_map=gt)


def _gaussian_transform(cov: np.ndarray) -> np.ndarray:
    # Eigen-based factor; tolerates the semidefinite corner cases A^T A
    # can produce where Cholesky would fail.
    w, u = np.linalg.eigh(cov)
    return u * np.sqrt(np.maximum(w, 0.0))


def generate_gaussian_stimulus(spec: GaussianSceneSpec, rng: np.random.Generator = None) -> Stimulus:
    """Generate one Gaussian-mixture scene per the spec.

    Per cluster: a mean sampled per coordinate from mean_range, covariance
    covariance_scale * A^T A with A entries uniform in [0, 1], and a point
    count from points_range. Out-of-image samples are rejected and redrawn
    to preserve within-image density.
    """
    spec.validate()
    if rng is None:
        rng = rngmod.stream(spec.seed, "gaussian-stimulus")
    size = spec.image_size
    counts = sorted(set(int(c) for c in spec.cluster_count_set))
    m = counts[rng.integers(len(counts))]

    clusters = []
    for _ in range(m):
        mean = rng.uniform(spec.mean_range[0], spec.mean_range[1], size=2)
        a = rng.uniform(0.0, 1.0, size=(2, 2))
        cov = spec.covariance_scale * (a.T @ a)
        want = int(rng.integers(spec.points_range[0], spec.points_range[1] + 1))
        transform = _gaussian_transform(cov)

        accepted = np.empty((want, 2), dtype=np.float64)
        have = 0
        drawn = 0
        budget = max(10_000, 200 * want)
        while have < want:
            need = want - have
            z = rng.standard_normal(size=(2 * need + 16, 2))
            cand = mean + z @ transform.T
            drawn += len(cand)
            ok = cand[
                (cand[:, 0] >= 0)
                & (cand[:, 0] < size)
                & (cand[:, 1] >= 0)
                & (cand[:, 1] < size)
            ]
            take = min(len(ok), need)
            accepted[have : have + take] = ok[:take]
            have += take
            if drawn >= budget and have < 0.01 * drawn:
                raise GenerationError(
                    "Gaussian rejection rate exceeded 99%; spec is degenerate for this image size"
                )
        clusters.append(accepted)

    labeled = _apply_label_order(assign_topdown_labels(clusters), spec.label_order, rng)
    image, gt = rasterize(labeled, size)
    return Stimulus(point_set=labeled, image=image, gt_label_map=gt)


def inject_noise(stimulus: Stimulus, count: int, rng: np.random.Generator) -> Stimulus:
    """Flip `count` distinct background pixels to foreground.

    The point set and label map are untouched: noise pixels carry image 1
    and gt BACKGROUND, and are recorded so evaluation can ignore them.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    image = stimulus.image.copy()
    background = np.flatnonzero(image.ravel() == 0)
    if count > len(background):
        raise NoiseError(f"requested {count} noise pixels, only {len(background)} background")
    if count == 0:
        return Stimulus(
            point_set=stimulus.point_set,
            image=image,
            gt_label_map=stimulus.gt_label_map.copy(),
            noise_pixels=stimulus.noise_pixels.copy(),
        )
    chosen = rng.choice(len(background), size=count, replace=False)
    flat = background[chosen]
    size = stimulus.image_size
    ys, xs = np.divmod(flat, size)
    image[ys, xs] = 1
    noise = np.column_stack([xs, ys]).astype(np.int64)
    return Stimulus(
        point_set=stimulus.point_set,
        image=image,
        gt_label_map=stimulus.gt_label_map.copy(),
        noise_pixels=np.concatenate([stimulus.noise_pixels, noise]),
    )
