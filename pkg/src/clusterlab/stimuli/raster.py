"""Rasterization of point sets to binary images and label maps."""

from __future__ import annotations

import numpy as np

from .types import BACKGROUND, PointSet


def rasterize(point_set: PointSet, image_size: int):
    """Render points onto an image_size^2 grid.

    pixel(floor(x), floor(y)) is set for every point. Where points of
    different labels share a pixel the label map takes the lowest id;
    everywhere else without a point it is BACKGROUND.
    """
    pts = point_set.points
    if len(pts) and (pts.min() < 0 or pts.max() >= image_size):
        raise ValueError("points outside [0, image_size)")
    px = np.floor(pts[:, 0]).astype(np.int64)
    py = np.floor(pts[:, 1]).astype(np.int64)

    image = np.zeros((image_size, image_size), dtype=np.uint8)
    image[py, px] = 1

    gt = np.full((image_size, image_size), BACKGROUND, dtype=np.int32)
    # Write in descending label order so the lowest label lands last and
    # wins contested pixels, independent of point order.
    order = np.argsort(-point_set.labels, kind="stable")
    gt[py[order], px[order]] = point_set.labels[order].astype(np.int32)
    return image, gt
