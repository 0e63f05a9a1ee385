"""Dataset persistence.

A dataset directory holds `manifest.json` plus three files per stimulus:

    NNNN.points   text, one "x y label noise" row per point
    NNNN.img.pgm  binary P5, 0/255 input raster
    NNNN.gt.pgm   binary P5, label+1 (0 = background)

Floats are written with %.17g so the round trip is bit-exact, and a
regeneration from the same spec and seed is byte-identical.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .. import rng as rngmod
from .scene import generate_gaussian_stimulus, generate_shape_stimulus, inject_noise
from .types import (
    BACKGROUND,
    GaussianSceneSpec,
    PointSet,
    ShapeKind,
    ShapeSceneSpec,
    SpecError,
    Stimulus,
)

MANIFEST_NAME = "manifest.json"
FORMAT_NAME = "clusterlab-dataset"
FORMAT_VERSION = 1


class DatasetError(RuntimeError):
    """Raised for malformed dataset directories or files."""


# ---------------------------------------------------------------------------
# PGM


def write_pgm(path, array: np.ndarray, maxval: int = 255) -> None:
    """Write a 2D uint8 array as a binary (P5) PGM file."""
    a = np.asarray(array)
    if a.ndim != 2:
        raise ValueError("PGM payload must be 2D")
    if a.dtype != np.uint8:
        if a.min() < 0 or a.max() > maxval:
            raise ValueError("PGM payload out of range")
        a = a.astype(np.uint8)
    h, w = a.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n%d\n" % (w, h, maxval))
        f.write(a.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(b"P5"):
        raise DatasetError(f"{path}: not a binary PGM")
    # Header: magic, width, height, maxval as whitespace-separated tokens,
    # then a single whitespace byte before the raster.
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(int(data[start:pos]))
    pos += 1
    w, h, maxval = fields
    if maxval > 255:
        raise DatasetError(f"{path}: 16-bit PGM not supported")
    raster = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos)
    return raster.reshape(h, w).copy()


# ---------------------------------------------------------------------------
# Points text format


def format_points(stimulus: Stimulus) -> str:
    rows = []
    ps = stimulus.point_set
    for (x, y), lab in zip(ps.points, ps.labels):
        rows.append("%.17g %.17g %d 0" % (x, y, lab))
    for x, y in stimulus.noise_pixels:
        rows.append("%d %d %d 1" % (x, y, BACKGROUND))
    return "\n".join(rows) + "\n"


def parse_points(text: str):
    """Parse a .points payload into (PointSet, noise_pixels)."""
    pts, labs, noise = [], [], []
    for ln, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise DatasetError(f"points line {ln}: expected 4 fields, got {len(parts)}")
        x, y = float(parts[0]), float(parts[1])
        lab, flag = int(parts[2]), int(parts[3])
        if flag:
            noise.append((int(x), int(y)))
        else:
            pts.append((x, y))
            labs.append(lab)
    if not pts:
        raise DatasetError("points file holds no labeled points")
    labels = np.asarray(labs, dtype=np.int64)
    point_set = PointSet(
        points=np.asarray(pts, dtype=np.float64),
        labels=labels,
        k=int(labels.max()) + 1,
    )
    return point_set, np.asarray(noise, dtype=np.int64).reshape(-1, 2)


# ---------------------------------------------------------------------------
# Spec (de)serialization


def spec_to_dict(spec) -> dict:
    if isinstance(spec, ShapeSceneSpec):
        return {
            "type": "shape",
            "shapes": [s.value for s in spec.shapes],
            "object_count_range": list(spec.object_count_range),
            "density_range": list(spec.density_range),
            "scale_range": list(spec.scale_range),
            "image_size": spec.image_size,
            "seed": spec.seed,
            "same_shape": spec.same_shape,
            "label_order": spec.label_order,
        }
    if isinstance(spec, GaussianSceneSpec):
        return {
            "type": "gaussian",
            "cluster_count_set": list(spec.cluster_count_set),
            "mean_range": list(spec.mean_range),
            "points_range": list(spec.points_range),
            "covariance_scale": spec.covariance_scale,
            "image_size": spec.image_size,
            "seed": spec.seed,
            "label_order": spec.label_order,
        }
    raise TypeError(f"not a scene spec: {type(spec).__name__}")


def spec_from_dict(d: dict):
    kind = d.get("type")
    if kind == "shape":
        spec = ShapeSceneSpec(
            shapes=tuple(ShapeKind(s) for s in d["shapes"]),
            object_count_range=tuple(d["object_count_range"]),
            density_range=tuple(d["density_range"]),
            scale_range=tuple(d["scale_range"]),
            image_size=d["image_size"],
            seed=d["seed"],
            same_shape=d.get("same_shape", False),
            label_order=d.get("label_order", "topdown"),
        )
    elif kind == "gaussian":
        spec = GaussianSceneSpec(
            cluster_count_set=tuple(d["cluster_count_set"]),
            mean_range=tuple(d["mean_range"]),
            points_range=tuple(d["points_range"]),
            covariance_scale=d["covariance_scale"],
            image_size=d["image_size"],
            seed=d["seed"],
            label_order=d.get("label_order", "topdown"),
        )
    else:
        raise SpecError(f"unknown spec type: {kind!r}")
    spec.validate()
    return spec


def generate_stimulus(spec, rng=None) -> Stimulus:
    """Dispatch to the right generator for the spec type."""
    if isinstance(spec, ShapeSceneSpec):
        return generate_shape_stimulus(spec, rng)
    if isinstance(spec, GaussianSceneSpec):
        return generate_gaussian_stimulus(spec, rng)
    raise TypeError(f"not a scene spec: {type(spec).__name__}")


# ---------------------------------------------------------------------------
# Stimulus and dataset round trip


def _names(index: int):
    base = "%04d" % index
    return base + ".points", base + ".img.pgm", base + ".gt.pgm"


def save_stimulus(directory, index: int, stimulus: Stimulus) -> None:
    pts_name, img_name, gt_name = _names(index)
    with open(os.path.join(directory, pts_name), "w") as f:
        f.write(format_points(stimulus))
    write_pgm(os.path.join(directory, img_name), stimulus.image * np.uint8(255))
    gt = (stimulus.gt_label_map + 1).astype(np.uint8)
    write_pgm(os.path.join(directory, gt_name), gt)


def load_stimulus(directory, index: int) -> Stimulus:
    pts_name, img_name, gt_name = _names(index)
    with open(os.path.join(directory, pts_name)) as f:
        point_set, noise = parse_points(f.read())
    image = (read_pgm(os.path.join(directory, img_name)) > 0).astype(np.uint8)
    gt = read_pgm(os.path.join(directory, gt_name)).astype(np.int32) - 1
    return Stimulus(point_set=point_set, image=image, gt_label_map=gt, noise_pixels=noise)


def generate_dataset(spec, count: int, out_dir, noise_count: int = 0, seed=None) -> dict:
    """Generate `count` stimuli into `out_dir` and write the manifest.

    Each stimulus runs from its own child seed so any one can be
    regenerated independently; with noise_count > 0 each raster gets
    that many flipped background pixels from a parallel noise stream.
    Returns the manifest dict.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    spec.validate()
    master = spec.seed if seed is None else int(seed)
    os.makedirs(out_dir, exist_ok=True)
    stim_seeds = [rngmod.child_seed(master, "stim", i) for i in range(count)]
    for i in range(count):
        stim = generate_stimulus(spec.with_seed(stim_seeds[i]))
        if noise_count:
            stim = inject_noise(stim, noise_count, rngmod.stream(master, "noise", i))
        save_stimulus(out_dir, i, stim)
    manifest = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "count": count,
        "seed": master,
        "noise_count": noise_count,
        "spec": spec_to_dict(spec),
        "stimulus_seeds": stim_seeds,
    }
    write_manifest(out_dir, manifest)
    return manifest


def write_manifest(directory, manifest: dict) -> None:
    path = os.path.join(directory, MANIFEST_NAME)
    with open(path, "w") as f:
        f.write(json.dumps(manifest, indent=2, sort_keys=True))
        f.write("\n")


def load_manifest(directory) -> dict:
    path = os.path.join(directory, MANIFEST_NAME)
    if not os.path.exists(path):
        raise DatasetError(f"no {MANIFEST_NAME} in {directory}")
    with open(path) as f:
        manifest = json.load(f)
    if manifest.get("format") != FORMAT_NAME:
        raise DatasetError(f"{path}: unrecognized format field")
    return manifest


def load_dataset(directory):
    """Load every stimulus of a dataset. Returns (manifest, stimuli)."""
    manifest = load_manifest(directory)
    stimuli = [load_stimulus(directory, i) for i in range(manifest["count"])]
    return manifest, stimuli
