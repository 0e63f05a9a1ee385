"""Shape geometry: membership predicates and uniform point sampling.

All shapes are defined centered at the origin, unrotated. `scale` is the
outer radius for circle and ring, the half side for square and square
ring, and the half length for the bar. Ring and square-ring inner size is
0.8 * scale; the bar is 2*scale long by 0.4*scale wide. Those ratios are
not dictated by the stimulus definitions, only chosen to look right.
"""

from __future__ import annotations

import numpy as np

from .types import PointSet, ShapeKind

RING_INNER = 0.8
BAR_HALF_WIDTH = 0.2  # fraction of scale


class ShapePlacementError(ValueError):
    """Shape does not fit inside the image at the requested placement."""


def shape_contains(kind: ShapeKind, pts: np.ndarray, scale: float, tol: float = 0.0) -> np.ndarray:
    """Membership mask for centered, unrotated shape coordinates."""
    x = pts[:, 0]
    y = pts[:, 1]
    if kind == ShapeKind.CIRCLE:
        return x * x + y * y <= (scale + tol) ** 2
    if kind == ShapeKind.RING:
        r2 = x * x + y * y
        return (r2 >= (RING_INNER * scale - tol) ** 2) & (r2 <= (scale + tol) ** 2)
    if kind == ShapeKind.SQUARE:
        return (np.abs(x) <= scale + tol) & (np.abs(y) <= scale + tol)
    if kind == ShapeKind.SQUARE_RING:
        m = np.maximum(np.abs(x), np.abs(y))
        return (m >= RING_INNER * scale - tol) & (m <= scale + tol)
    if kind == ShapeKind.BAR:
        return (np.abs(x) <= scale + tol) & (np.abs(y) <= BAR_HALF_WIDTH * scale + tol)
    raise ValueError(f"unknown shape kind {kind!r}")


def half_extents(kind: ShapeKind, scale: float, rotation: float) -> tuple:
    """Axis-aligned bounding half-extents (ex, ey) after rotation."""
    c = abs(np.cos(rotation))
    s = abs(np.sin(rotation))
    if kind in (ShapeKind.CIRCLE, ShapeKind.RING):
        return scale, scale
    if kind in (ShapeKind.SQUARE, ShapeKind.SQUARE_RING):
        e = scale * (c + s)
        return e, e
    if kind == ShapeKind.BAR:
        w = BAR_HALF_WIDTH * scale
        return scale * c + w * s, scale * s + w * c
    raise ValueError(f"unknown shape kind {kind!r}")


def _sample_centered(kind: ShapeKind, scale: float, density: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform points inside the centered, unrotated shape."""
    if kind == ShapeKind.SQUARE:
        return rng.uniform(-scale, scale, size=(density, 2))
    if kind == ShapeKind.BAR:
        x = rng.uniform(-scale, scale, size=density)
        y = rng.uniform(-BAR_HALF_WIDTH * scale, BAR_HALF_WIDTH * scale, size=density)
        return np.column_stack([x, y])
    # Rejection from the bounding square; uniformity is inherited.
    out = np.empty((density, 2), dtype=np.float64)
    have = 0
    while have < density:
        need = density - have
        cand = rng.uniform(-scale, scale, size=(2 * need + 8, 2))
        keep = cand[shape_contains(kind, cand, scale)]
        take = min(len(keep), need)
        out[have : have + take] = keep[:take]
        have += take
    return out


def sample_shape_points(
    kind: ShapeKind,
    scale: float,
    density: int,
    rotation: float,
    translation: tuple,
    rng: np.random.Generator,
    image_size: int,
) -> PointSet:
    """Sample `density` uniform points in the shape, rotate about the shape
    centroid, translate, and return a single-cluster point set.

    Raises ShapePlacementError when the rotated bounding box does not fit
    inside [0, image_size) at the requested translation; the caller is
    expected to resample the placement.
    """
    if density < 1:
        raise ValueError("density must be >= 1")
    tx, ty = float(translation[0]), float(translation[1])
    ex, ey = half_extents(kind, scale, rotation)
    if tx - ex < 0 or ty - ey < 0 or tx + ex >= image_size or ty + ey >= image_size:
        raise ShapePlacementError(
            f"{kind.value} at scale {scale:.3g} does not fit at ({tx:.3g}, {ty:.3g})"
        )
    pts = _sample_centered(kind, scale, int(density), rng)
    c, s = np.cos(rotation), np.sin(rotation)
    rot = np.array([[c, -s], [s, c]])
    placed = pts @ rot.T + np.array([tx, ty])
    return PointSet(points=placed, labels=np.zeros(len(placed), dtype=np.int64), k=1)
