"""Synthetic clustering stimuli: point scenes, rasters, datasets."""

from .io import (
    DatasetError,
    generate_dataset,
    generate_stimulus,
    load_dataset,
    load_manifest,
    load_stimulus,
    read_pgm,
    save_stimulus,
    spec_from_dict,
    spec_to_dict,
    write_pgm,
)
from .raster import rasterize
from .scene import (
    GenerationError,
    NoiseError,
    assign_topdown_labels,
    generate_gaussian_stimulus,
    generate_shape_stimulus,
    inject_noise,
)
from .shapes import (
    BAR_HALF_WIDTH,
    RING_INNER,
    ShapePlacementError,
    half_extents,
    sample_shape_points,
    shape_contains,
)
from .types import (
    ALL_SHAPES,
    BACKGROUND,
    GaussianSceneSpec,
    PointSet,
    ShapeKind,
    ShapeSceneSpec,
    SpecError,
    Stimulus,
)

__all__ = [
    "ALL_SHAPES",
    "BACKGROUND",
    "BAR_HALF_WIDTH",
    "DatasetError",
    "GaussianSceneSpec",
    "GenerationError",
    "NoiseError",
    "PointSet",
    "RING_INNER",
    "ShapeKind",
    "ShapePlacementError",
    "ShapeSceneSpec",
    "SpecError",
    "Stimulus",
    "assign_topdown_labels",
    "generate_dataset",
    "generate_gaussian_stimulus",
    "generate_shape_stimulus",
    "generate_stimulus",
    "half_extents",
    "inject_noise",
    "load_dataset",
    "load_manifest",
    "load_stimulus",
    "rasterize",
    "read_pgm",
    "sample_shape_points",
    "save_stimulus",
    "shape_contains",
    "spec_from_dict",
    "spec_to_dict",
    "write_pgm",
]
