import itertools

import numpy as np
import pytest

from clusterlab import rng as rngmod
from clusterlab.stimuli import (
    BACKGROUND,
    GaussianSceneSpec,
    NoiseError,
    PointSet,
    ShapeKind,
    ShapeSceneSpec,
    SpecError,
    assign_topdown_labels,
    generate_dataset,
    generate_gaussian_stimulus,
    generate_shape_stimulus,
    inject_noise,
    load_dataset,
    load_manifest,
    rasterize,
    read_pgm,
    write_pgm,
)


# ---------------------------------------------------------------------------
# Label assignment


def test_topdown_orders_by_min_y():
    high = np.array([[30.0, 10.0], [31.0, 12.0]])
    low = np.array([[30.0, 40.0], [31.0, 44.0]])
    ps = assign_topdown_labels([low, high])
    assert ps.k == 2
    # The cluster whose topmost point has the smaller y gets label 0.
    assert np.array_equal(ps.points[:2], high)
    assert list(ps.labels) == [0, 0, 1, 1]


def test_topdown_tie_breaks_on_min_x():
    left = np.array([[5.0, 20.0], [8.0, 25.0]])
    right = np.array([[90.0, 20.0], [95.0, 28.0]])
    ps = assign_topdown_labels([right, left])
    assert np.array_equal(ps.points[:2], left)


def test_topdown_invariant_under_input_permutation():
    clusters = [
        np.array([[12.0, 50.0], [14.0, 52.0], [13.0, 55.0]]),
        np.array([[60.0, 8.0], [61.0, 9.0]]),
        np.array([[100.0, 90.0], [101.0, 95.0], [99.0, 91.0]]),
    ]
    reference = assign_topdown_labels(clusters)
    for perm in itertools.permutations(range(3)):
        got = assign_topdown_labels([clusters[i] for i in perm])
        assert got == reference


def test_topdown_rejects_empty():
    with pytest.raises(ValueError):
        assign_topdown_labels([])
    with pytest.raises(ValueError):
        assign_topdown_labels([np.zeros((0, 2)), np.ones((2, 2))])


# ---------------------------------------------------------------------------
# Rasterization


def test_rasterize_single_point():
    ps = PointSet(points=np.array([[3.7, 9.2]]), labels=np.array([0]), k=1)
    image, gt = rasterize(ps, 16)
    assert image.sum() == 1
    assert image[9, 3] == 1
    assert gt[9, 3] == 0
    assert np.sum(gt != BACKGROUND) == 1


def test_rasterize_collision_takes_lowest_label():
    ps = PointSet(
        points=np.array([[5.2, 5.8], [5.9, 5.1], [20.0, 20.0]]),
        labels=np.array([1, 0, 2]),
        k=3,
    )
    image, gt = rasterize(ps, 32)
    assert image[5, 5] == 1
    assert gt[5, 5] == 0


def test_rasterize_counts_match_distinct_pixels():
    rng = np.random.default_rng(11)
    pts = rng.uniform(0, 64, size=(500, 2))
    ps = PointSet(points=pts, labels=np.zeros(500, dtype=np.int64), k=1)
    image, _ = rasterize(ps, 64)
    distinct = len({(int(x), int(y)) for x, y in pts})
    assert int(image.sum()) == distinct


def test_rasterize_consistent_with_point_labels():
    spec = ShapeSceneSpec(object_count_range=(3, 3), seed=21)
    stim = generate_shape_stimulus(spec)
    ps = stim.point_set
    px = ps.points[:, 0].astype(int)
    py = ps.points[:, 1].astype(int)
    # Pixels hit by points of more than one label keep the lowest label;
    # everywhere else the map recovers each point's own label.
    lowest = {}
    for x, y, lab in zip(px, py, ps.labels):
        key = (x, y)
        lowest[key] = min(lowest.get(key, lab), lab)
    for x, y, lab in zip(px, py, ps.labels):
        assert stim.gt_label_map[y, x] == lowest[(x, y)]


# ---------------------------------------------------------------------------
# Shape scenes


def test_shape_stimulus_cluster_counts_within_density():
    spec = ShapeSceneSpec(
        shapes=(ShapeKind.CIRCLE,),
        object_count_range=(2, 2),
        density_range=(200, 300),
        seed=31,
    )
    stim = generate_shape_stimulus(spec)
    assert stim.point_set.k == 2
    for lab in range(2):
        count = int(np.sum(stim.point_set.labels == lab))
        assert 200 <= count <= 300


def test_shape_stimulus_deterministic():
    spec = ShapeSceneSpec(seed=32)
    assert generate_shape_stimulus(spec) == generate_shape_stimulus(spec)


def test_single_object_label_map_values():
    spec = ShapeSceneSpec(object_count_range=(1, 1), seed=33)
    stim = generate_shape_stimulus(spec)
    assert set(np.unique(stim.gt_label_map)) <= {-1, 0}


def test_shape_stimulus_labels_contiguous_and_topdown():
    for seed in range(40, 50):
        spec = ShapeSceneSpec(object_count_range=(1, 3), seed=seed)
        stim = generate_shape_stimulus(spec)
        ps = stim.point_set
        assert sorted(set(ps.labels)) == list(range(ps.k))
        tops = [ps.points[ps.labels == lab, 1].min() for lab in range(ps.k)]
        assert tops == sorted(tops)
        assert np.all(ps.points >= 0)
        assert np.all(ps.points < spec.image_size)


def test_same_shape_flag_is_deterministic_and_valid():
    spec = ShapeSceneSpec(object_count_range=(3, 3), same_shape=True, seed=34)
    stim = generate_shape_stimulus(spec)
    assert stim.point_set.k == 3
    assert generate_shape_stimulus(spec) == stim


def test_random_label_order_keeps_partition():
    base = ShapeSceneSpec(object_count_range=(3, 3), seed=35)
    shuffled = ShapeSceneSpec(object_count_range=(3, 3), seed=35, label_order="random")
    a = generate_shape_stimulus(base).point_set
    b = generate_shape_stimulus(shuffled).point_set
    assert np.array_equal(a.points, b.points)
    assert a.k == b.k
    # Same partition, relabeled: co-membership must agree exactly.
    same_a = a.labels[:, None] == a.labels[None, :]
    same_b = b.labels[:, None] == b.labels[None, :]
    assert np.array_equal(same_a, same_b)


# ---------------------------------------------------------------------------
# Gaussian scenes


def test_gaussian_cluster_counts_within_range():
    spec = GaussianSceneSpec(cluster_count_set=(2,), points_range=(100, 400), seed=51)
    stim = generate_gaussian_stimulus(spec)
    assert stim.point_set.k == 2
    for lab in range(2):
        count = int(np.sum(stim.point_set.labels == lab))
        assert 100 <= count <= 400
    assert np.all(stim.point_set.points >= 0)
    assert np.all(stim.point_set.points < spec.image_size)


def test_gaussian_sample_covariance_matches_generator():
    spec = GaussianSceneSpec(
        cluster_count_set=(1,),
        mean_range=(60.0, 70.0),
        points_range=(10000, 10000),
        covariance_scale=25.0,
        seed=52,
    )
    # Replay the generator's stream to recover the covariance it drew.
    rng = rngmod.stream(spec.seed, "gaussian-stimulus")
    rng.integers(1)
    rng.uniform(60.0, 70.0, size=2)
    a = rng.uniform(0.0, 1.0, size=(2, 2))
    cov = 25.0 * (a.T @ a)

    stim = generate_gaussian_stimulus(spec)
    sample = np.cov(stim.point_set.points.T)
    assert np.all(np.abs(sample - cov) <= 0.10 * np.abs(cov))


def test_gaussian_covariance_scale_zero_rejected():
    with pytest.raises(SpecError):
        GaussianSceneSpec(covariance_scale=0.0).validate()


def test_gaussian_deterministic():
    spec = GaussianSceneSpec(seed=53)
    assert generate_gaussian_stimulus(spec) == generate_gaussian_stimulus(spec)


# ---------------------------------------------------------------------------
# Noise injection


def test_inject_noise_zero_is_identity():
    stim = generate_shape_stimulus(ShapeSceneSpec(seed=61))
    out = inject_noise(stim, 0, np.random.default_rng(0))
    assert out == stim


def test_inject_noise_adds_exact_count():
    stim = generate_shape_stimulus(ShapeSceneSpec(seed=62))
    out = inject_noise(stim, 500, np.random.default_rng(1))
    assert int(out.image.sum()) == int(stim.image.sum()) + 500
    assert len(out.noise_pixels) == 500
    assert np.array_equal(out.gt_label_map, stim.gt_label_map)
    assert out.point_set == stim.point_set
    for x, y in out.noise_pixels:
        assert out.image[y, x] == 1
        assert out.gt_label_map[y, x] == BACKGROUND
        assert stim.image[y, x] == 0


def test_inject_noise_rejects_overfull():
    stim = generate_shape_stimulus(ShapeSceneSpec(image_size=32, scale_range=(5.0, 10.0), seed=63))
    background = int(np.sum(stim.image == 0))
    with pytest.raises(NoiseError):
        inject_noise(stim, background + 1, np.random.default_rng(2))


# ---------------------------------------------------------------------------
# Disk format


def test_pgm_round_trip(tmp_path):
    rng = np.random.default_rng(71)
    img = rng.integers(0, 256, size=(17, 23)).astype(np.uint8)
    path = tmp_path / "x.pgm"
    write_pgm(path, img)
    assert np.array_equal(read_pgm(path), img)


def test_dataset_round_trip_and_regeneration(tmp_path):
    spec = ShapeSceneSpec(seed=72)
    d1 = tmp_path / "a"
    d2 = tmp_path / "b"
    generate_dataset(spec, 4, d1, noise_count=100)
    generate_dataset(spec, 4, d2, noise_count=100)

    manifest, stimuli = load_dataset(d1)
    assert manifest["count"] == 4
    assert len(stimuli) == 4
    for stim in stimuli:
        assert len(stim.noise_pixels) == 100

    for name in sorted(p.name for p in d1.iterdir()):
        assert (d1 / name).read_bytes() == (d2 / name).read_bytes()


def test_dataset_count_zero_writes_manifest_only(tmp_path):
    generate_dataset(GaussianSceneSpec(seed=73), 0, tmp_path)
    manifest = load_manifest(tmp_path)
    assert manifest["count"] == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["manifest.json"]


def test_loaded_stimulus_equals_generated(tmp_path):
    spec = GaussianSceneSpec(seed=74)
    generate_dataset(spec, 2, tmp_path)
    manifest, stimuli = load_dataset(tmp_path)
    from clusterlab.stimuli import generate_stimulus

    for i, stim in enumerate(stimuli):
        again = generate_stimulus(spec.with_seed(manifest["stimulus_seeds"][i]))
        assert stim == again
