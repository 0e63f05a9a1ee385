"""Core stimulus data types and scene specifications."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

BACKGROUND = -1


class SpecError(ValueError):
    """A scene specification violates its invariants."""


class ShapeKind(str, Enum):
    CIRCLE = "circle"
    RING = "ring"
    SQUARE = "square"
    SQUARE_RING = "square_ring"
    BAR = "bar"


ALL_SHAPES = (
    ShapeKind.CIRCLE,
    ShapeKind.RING,
    ShapeKind.SQUARE,
    ShapeKind.SQUARE_RING,
    ShapeKind.BAR,
)


@dataclass
class PointSet:
    """Labeled 2D points. Coordinates are pixels, x right, y down (row 0 is
    the top of the image). Label ids are contiguous in [0, k)."""

    points: np.ndarray  # (n, 2) float64, columns x, y
    labels: np.ndarray  # (n,) int64
    k: int

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if len(self.points) != len(self.labels):
            raise ValueError("points and labels length mismatch")

    @property
    def n(self) -> int:
        return len(self.points)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, PointSet)
            and self.k == other.k
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.labels, other.labels)
        )


@dataclass
class Stimulus:
    """One synthetic scene: its points, binary raster, ground-truth label
    map (BACKGROUND outside foreground and at noise pixels), and any
    injected noise pixels."""

    point_set: PointSet
    image: np.ndarray  # (S, S) uint8, 1 foreground / 0 background
    gt_label_map: np.ndarray  # (S, S) int32, cluster id or BACKGROUND
    noise_pixels: np.ndarray = field(
        default_factory=lambda: np.zeros((0, 2), dtype=np.int64)
    )  # (m, 2) int64, columns x, y

    def __post_init__(self):
        self.image = np.asarray(self.image, dtype=np.uint8)
        self.gt_label_map = np.asarray(self.gt_label_map, dtype=np.int32)
        self.noise_pixels = np.asarray(self.noise_pixels, dtype=np.int64).reshape(-1, 2)
        if self.image.shape != self.gt_label_map.shape:
            raise ValueError("image and gt_label_map shape mismatch")

    @property
    def image_size(self) -> int:
        return self.image.shape[0]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Stimulus)
            and self.point_set == other.point_set
            and np.array_equal(self.image, other.image)
            and np.array_equal(self.gt_label_map, other.gt_label_map)
            and np.array_equal(self.noise_pixels, other.noise_pixels)
        )


@dataclass(frozen=True)
class ShapeSceneSpec:
    """Parameters for shape scenes: the shape set, object count interval,
    per-object point density interval, object scale interval, and canvas
    size."""

    shapes: tuple = ALL_SHAPES
    object_count_range: tuple = (1, 3)
    density_range: tuple = (200, 300)
    scale_range: tuple = (10.0, 30.0)
    image_size: int = 128
    seed: int = 0
    same_shape: bool = False  # Exp 2: all objects in a scene share one kind
    label_order: str = "topdown"  # or "random"

    def validate(self) -> None:
        if not self.shapes:
            raise SpecError("shapes set is empty")
        if self.object_count_range[0] < 1 or self.object_count_range[0] > self.object_count_range[1]:
            raise SpecError("object_count_range min must be >= 1 and <= max")
        if self.density_range[0] < 1 or self.density_range[0] > self.density_range[1]:
            raise SpecError("density_range must lie in [1, inf)")
        lo, hi = self.scale_range
        if not (0.0 < lo <= hi < self.image_size / 2):
            raise SpecError("scale_range must lie in (0, image_size/2)")
        if self.image_size < 2:
            raise SpecError("image_size too small")
        if self.label_order not in ("topdown", "random"):
            raise SpecError(f"unknown label_order {self.label_order!r}")

    def with_seed(self, seed: int) -> "ShapeSceneSpec":
        return replace(self, seed=seed)


@dataclass(frozen=True)
class GaussianSceneSpec:
    """Parameters for Gaussian-mixture scenes. Each cluster draws its mean
    per coordinate from mean_range and its covariance as
    covariance_scale * A^T A with A entries uniform in [0, 1]."""

    cluster_count_set: tuple = (2, 3)
    mean_range: tuple = (20.0, 100.0)
    points_range: tuple = (100, 400)
    covariance_scale: float = 25.0
    image_size: int = 128
    seed: int = 0
    label_order: str = "topdown"

    def validate(self) -> None:
        if not self.cluster_count_set or min(self.cluster_count_set) < 1:
            raise SpecError("cluster_count_set must contain integers >= 1")
        lo, hi = self.mean_range
        if not (0.0 <= lo <= hi < self.image_size):
            raise SpecError("mean_range must lie in [0, image_size)")
        if self.points_range[0] < 2 or self.points_range[0] > self.points_range[1]:
            raise SpecError("points_range min must be >= 2")
        if not self.covariance_scale > 0:
            raise SpecError("covariance_scale must be > 0")
        if self.label_order not in ("topdown", "random"):
            raise SpecError(f"unknown label_order {self.label_order!r}")

    def with_seed(self, seed: int) -> "GaussianSceneSpec":
        return replace(self, seed=seed)
