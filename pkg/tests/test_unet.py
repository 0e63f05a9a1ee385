import numpy as np
import pytest

from clusterlab.stimuli import ShapeSceneSpec, generate_shape_stimulus
from clusterlab.unet import (
    CheckpointError,
    ConfigError,
    TrainConfig,
    UNetConfig,
    build_unet,
    encode_target,
    load_checkpoint,
    predict_labels,
    save_checkpoint,
    train,
)

SMALL = UNetConfig(depth=2, base_filters=8, output_channels=3, image_size=16)


def small_stimulus(seed=90, k=2):
    spec = ShapeSceneSpec(
        image_size=16,
        scale_range=(2.0, 4.0),
        density_range=(20, 40),
        object_count_range=(k, k),
        seed=seed,
    )
    return generate_shape_stimulus(spec)


def test_config_validation():
    with pytest.raises(ConfigError):
        UNetConfig(depth=4, image_size=8).validate()
    with pytest.raises(ConfigError):
        UNetConfig(kernel_size=2).validate()
    UNetConfig().validate()


def test_forward_output_shape_and_range():
    model = build_unet(SMALL, seed=0)
    stim = small_stimulus()
    out = model.forward(stim.image).values
    assert out.shape == (3, 16, 16)
    assert np.all(out >= 0.0)
    assert np.all(out <= 1.0)


def test_background_output_exactly_zero():
    for seed in (0, 1, 2):
        model = build_unet(SMALL, seed=seed)
        stim = small_stimulus(seed=91 + seed)
        out = model.forward(stim.image).values
        assert np.all(out[:, stim.image == 0] == 0.0)
        assert np.all(out[:, stim.image == 1] > 0.0)


def test_encode_target_single_cluster():
    stim = small_stimulus(seed=92, k=1)
    target = encode_target(stim, 3)
    assert target.shape == (3, 16, 16)
    assert target[0].sum() > 0
    assert np.all(target[1:] == 0)


def test_encode_target_channel_sums_match_gt():
    stim = small_stimulus(seed=93, k=2)
    target = encode_target(stim, 3)
    for c in range(3):
        assert target[c].sum() == np.sum(stim.gt_label_map == c)
    assert np.all(target[:, stim.gt_label_map == -1] == 0)


def test_too_many_clusters_is_an_error_naming_the_stimulus():
    stim = small_stimulus(seed=94, k=3)
    with pytest.raises(ConfigError):
        encode_target(stim, 2)
    model = build_unet(UNetConfig(depth=2, base_filters=4, output_channels=2, image_size=16), seed=0)
    with pytest.raises(ConfigError, match="stimulus 1"):
        train(model, [small_stimulus(seed=95, k=1), stim], TrainConfig(epochs=1))


def test_train_deterministic_history():
    stims = [small_stimulus(seed=s) for s in (96, 97, 98)]
    h1 = train(build_unet(SMALL, seed=5), stims, TrainConfig(epochs=4, batch_size=2, seed=11))[1]
    h2 = train(build_unet(SMALL, seed=5), stims, TrainConfig(epochs=4, batch_size=2, seed=11))[1]
    assert h1 == h2


def test_train_reduces_loss_on_training_set():
    stims = [small_stimulus(seed=s) for s in (99, 100)]
    model = build_unet(SMALL, seed=6)
    _, history = train(model, stims, TrainConfig(epochs=25, batch_size=2, seed=0))
    assert history[-1] < history[0]


def test_overfit_one_sample():
    stim = small_stimulus(seed=101)
    model = build_unet(SMALL, seed=7)
    _, history = train(model, [stim], TrainConfig(epochs=200, batch_size=16, seed=0))
    assert history[-1] < 0.1 * history[0]


def test_gradient_reaches_every_parameter_tensor():
    """One backward pass must touch all weights.

    Binary scenes leave most ReLU channels inactive, so a per-entry census
    never reaches 100%; what a wiring bug (dropped skip, detached head)
    produces instead is an entire tensor with a zero gradient.  Assert full
    per-tensor coverage plus an empirically calibrated per-entry floor.
    """
    from clusterlab.autodiff import mse_loss

    cfg = UNetConfig(depth=4, base_filters=16, output_channels=3, image_size=64)
    spec = ShapeSceneSpec(
        image_size=64,
        scale_range=(5.0, 15.0),
        density_range=(100, 150),
        object_count_range=(2, 2),
        seed=102,
    )
    stim = generate_shape_stimulus(spec)
    model = build_unet(cfg, seed=8)
    loss = mse_loss(model.forward(stim.image), encode_target(stim, 3))
    loss.backward()
    for p in model.parameters():
        assert np.count_nonzero(p.grad) > 0, p.name
    total = sum(p.values.size for p in model.parameters())
    nonzero = sum(int(np.count_nonzero(p.grad)) for p in model.parameters())
    assert nonzero >= 0.90 * total


def test_predict_dominant_channel_and_tie_break():
    model = build_unet(SMALL, seed=9)
    model.params["head_w"].values[:] = 0.0
    model.params["head_b"].values[:] = np.array([0.0, 5.0, 0.0], dtype=np.float32)
    stim = small_stimulus(seed=103)
    res = predict_labels(model, stim)
    assert res.k_found == 1
    assert np.all(res.labels == 0)
    assert res.method == "CNN"


def test_checkpoint_round_trip(tmp_path):
    model = build_unet(SMALL, seed=10)
    stim = small_stimulus(seed=104)
    train(model, [stim], TrainConfig(epochs=2, batch_size=1, seed=0))
    p1 = tmp_path / "a.ckpt"
    p2 = tmp_path / "b.ckpt"
    save_checkpoint(model, p1)
    loaded = load_checkpoint(p1)
    save_checkpoint(loaded, p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert loaded.config == model.config
    out1 = model.forward(stim.image).values
    out2 = loaded.forward(stim.image).values
    assert np.array_equal(out1, out2)


def test_checkpoint_corruption_errors(tmp_path):
    model = build_unet(SMALL, seed=11)
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    blob = bytearray(path.read_bytes())

    bad_magic = tmp_path / "bad_magic.ckpt"
    bad_magic.write_bytes(b"XXXX" + bytes(blob[4:]))
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(bad_magic)

    bad_version = tmp_path / "bad_version.ckpt"
    bad_version.write_bytes(bytes(blob[:4]) + b"\x63\x00\x00\x00" + bytes(blob[8:]))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(bad_version)

    truncated = tmp_path / "trunc.ckpt"
    truncated.write_bytes(bytes(blob[: len(blob) // 2]))
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(truncated)


def test_f64_mode_matches_f32_forward_closely():
    model32 = build_unet(SMALL, seed=12)
    model64 = model32.astype(np.float64)
    stim = small_stimulus(seed=105)
    out32 = model32.forward(stim.image).values
    out64 = model64.forward(stim.image).values
    np.testing.assert_allclose(out32, out64, atol=1e-5)
