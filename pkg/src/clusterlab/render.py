"""Grayscale renderings of stimuli and clustering results.

Outputs match the dataset's raster conventions: PGM P5 as the bit-exact
format, PNG as an optional convenience via pillow. Cluster ids map to
evenly spaced gray levels, brightest for label 0 (the topmost cluster),
so a ground-truth render of a k-cluster stimulus uses k distinct levels.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image

from .stimuli import Stimulus
from .stimuli.io import write_pgm

GRAY_NOISE = 40
_LEVEL_LO = 90
_LEVEL_HI = 255


def gray_levels(k: int) -> np.ndarray:
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > _LEVEL_HI - _LEVEL_LO:
        raise ValueError(f"cannot place {k} distinct levels in [{_LEVEL_LO}, {_LEVEL_HI}]")
    return np.round(np.linspace(_LEVEL_HI, _LEVEL_LO, k)).astype(np.uint8)


def render_input(stimulus: Stimulus) -> np.ndarray:
    return (stimulus.image * np.uint8(255)).astype(np.uint8)


def _paint(stimulus: Stimulus, labels: np.ndarray, k: int) -> np.ndarray:
    canvas = np.zeros(stimulus.image.shape, dtype=np.uint8)
    levels = gray_levels(k)
    px = stimulus.point_set.points[:, 0].astype(int)
    py = stimulus.point_set.points[:, 1].astype(int)
    canvas[py, px] = levels[labels]
    return canvas


def render_gt(stimulus: Stimulus) -> np.ndarray:
    """Ground-truth coloring; injected noise pixels get a dim flat gray."""
    canvas = _paint(stimulus, stimulus.point_set.labels, stimulus.point_set.k)
    if len(stimulus.noise_pixels):
        nx = stimulus.noise_pixels[:, 0]
        ny = stimulus.noise_pixels[:, 1]
        canvas[ny, nx] = GRAY_NOISE
    return canvas


def render_labels(stimulus: Stimulus, labels) -> np.ndarray:
    """Coloring of a predicted per-point labeling."""
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) != stimulus.point_set.n:
        raise ValueError(
            f"labeling covers {len(labels)} points, stimulus has {stimulus.point_set.n}"
        )
    return _paint(stimulus, labels, int(labels.max()) + 1)


def save_png(path, array: np.ndarray) -> None:
    Image.fromarray(np.asarray(array, dtype=np.uint8), mode="L").save(path)


def render_stimulus_files(stimulus: Stimulus, out_dir, base: str,
                          results=None, png: bool = False) -> list:
    """Write input and GT renders, plus one render per named result.

    `results` maps a method name to its ClusteringResult (or a plain
    label array). Returns the paths written.
    """
    os.makedirs(out_dir, exist_ok=True)
    images = [("input", render_input(stimulus)), ("gt", render_gt(stimulus))]
    for name, result in (results or {}).items():
        labels = getattr(result, "labels", result)
        images.append((f"pred-{name}", render_labels(stimulus, labels)))
    paths = []
    for tag, arr in images:
        path = os.path.join(out_dir, f"{base}.{tag}.pgm")
        write_pgm(path, arr)
        paths.append(path)
        if png:
            path = os.path.join(out_dir, f"{base}.{tag}.png")
            save_png(path, arr)
            paths.append(path)
    return paths
