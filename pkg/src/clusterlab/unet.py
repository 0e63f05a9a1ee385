"""The U-Net clusterer: build, train, predict, checkpoint.

The network is an encoder-decoder with skip connections. Each encoder
stack is [conv-ReLU, conv-ReLU, maxpool]; each decoder stack mirrors it
as [upsample, concat pre-pool skip, conv-ReLU, conv-ReLU]. A 1x1
convolution head with sigmoid produces one output map per representable
cluster, and the result is pointwise-multiplied by the binary input so
background pixels are exactly zero for any parameters.

Training treats clustering as dense regression: the target stacks one
binary map per cluster (top-down label order), and the loss is plain MSE
against the masked sigmoid output. Decoding assigns each point the
argmax channel at its pixel.
"""

from __future__ import annotations

import json
import struct
import time
from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .autodiff import (
    Adam,
    Tensor,
    add,
    concat_channels,
    conv2d,
    max_pool2x2,
    mse_loss,
    pointwise_multiply,
    relu,
    scale,
    sigmoid,
    upsample_nearest2x,
)
from .baselines.common import ClusteringResult, make_result
from .stimuli import Stimulus

CHECKPOINT_MAGIC = b"OCLU"
CHECKPOINT_VERSION = 1


class ConfigError(ValueError):
    pass


class CheckpointError(RuntimeError):
    pass


@dataclass(frozen=True)
class UNetConfig:
    depth: int = 5
    base_filters: int = 16
    output_channels: int = 3
    image_size: int = 128
    kernel_size: int = 3

    def validate(self) -> None:
        if self.depth < 1:
            raise ConfigError("depth must be >= 1")
        if self.image_size % (2 ** self.depth) != 0:
            raise ConfigError(
                f"image_size {self.image_size} not divisible by 2^depth = {2 ** self.depth}"
            )
        if self.base_filters < 1 or self.output_channels < 1:
            raise ConfigError("filters and output channels must be positive")
        if self.kernel_size % 2 == 0 or self.kernel_size < 1:
            raise ConfigError("kernel_size must be odd")

    def to_dict(self) -> dict:
        return {
            "depth": self.depth,
            "base_filters": self.base_filters,
            "output_channels": self.output_channels,
            "image_size": self.image_size,
            "kernel_size": self.kernel_size,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "UNetConfig":
        cfg = cls(**{k: int(d[k]) for k in (
            "depth", "base_filters", "output_channels", "image_size", "kernel_size")})
        cfg.validate()
        return cfg


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    learning_rate: float = 0.001
    epochs: int = 30
    seed: int = 0
    deterministic: bool = True

    def validate(self) -> None:
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")


def _param_plan(config: UNetConfig):
    """Canonical (name, shape, init) list; order fixes checkpoint layout."""
    f = config.base_filters
    k = config.kernel_size
    plan = []
    c_in = 1
    for i in range(config.depth):
        plan.append((f"enc{i}_conv1_w", (f, c_in, k, k), "he"))
        plan.append((f"enc{i}_conv1_b", (f,), "zero"))
        plan.append((f"enc{i}_conv2_w", (f, f, k, k), "he"))
        plan.append((f"enc{i}_conv2_b", (f,), "zero"))
        c_in = f
    for i in reversed(range(config.depth)):
        plan.append((f"dec{i}_conv1_w", (f, 2 * f, k, k), "he"))
        plan.append((f"dec{i}_conv1_b", (f,), "zero"))
        plan.append((f"dec{i}_conv2_w", (f, f, k, k), "he"))
        plan.append((f"dec{i}_conv2_b", (f,), "zero"))
    plan.append(("head_w", (config.output_channels, f, 1, 1), "glorot"))
    plan.append(("head_b", (config.output_channels,), "zero"))
    return plan


def _init_values(shape, kind: str, rng: np.random.Generator) -> np.ndarray:
    if kind == "zero":
        return np.zeros(shape)
    fan_in = int(np.prod(shape[1:]))
    if kind == "he":
        limit = np.sqrt(6.0 / fan_in)
    else:
        fan_out = shape[0] * int(np.prod(shape[2:]))
        limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class UNetModel:
    def __init__(self, config: UNetConfig, params, dtype):
        self.config = config
        self.params = dict(params)
        self.dtype = np.dtype(dtype)

    def parameters(self):
        return list(self.params.values())

    def forward(self, image) -> Tensor:
        """Run the network on one binary image (H,W) or (1,H,W)."""
        v = np.asarray(image, dtype=self.dtype)
        if v.ndim == 2:
            v = v[None, :, :]
        if v.shape != (1, self.config.image_size, self.config.image_size):
            raise ConfigError(
                f"input shape {v.shape} does not match image_size {self.config.image_size}"
            )
        mask = Tensor(v)
        p = self.params
        x = mask
        skips = []
        for i in range(self.config.depth):
            x = relu(conv2d(x, p[f"enc{i}_conv1_w"], p[f"enc{i}_conv1_b"]))
            x = relu(conv2d(x, p[f"enc{i}_conv2_w"], p[f"enc{i}_conv2_b"]))
            skips.append(x)
            x = max_pool2x2(x)
        for i in reversed(range(self.config.depth)):
            x = upsample_nearest2x(x)
            x = concat_channels(x, skips[i])
            x = relu(conv2d(x, p[f"dec{i}_conv1_w"], p[f"dec{i}_conv1_b"]))
            x = relu(conv2d(x, p[f"dec{i}_conv2_w"], p[f"dec{i}_conv2_b"]))
        x = sigmoid(conv2d(x, p["head_w"], p["head_b"]))
        return pointwise_multiply(x, mask)

    def astype(self, dtype) -> "UNetModel":
        dtype = np.dtype(dtype)
        params = {
            name: Tensor(t.values.astype(dtype), requires_grad=True, name=name)
            for name, t in self.params.items()
        }
        return UNetModel(self.config, params, dtype)


def build_unet(config: UNetConfig, seed: int = 0, dtype=np.float32) -> UNetModel:
    config.validate()
    rng = rngmod.stream(seed, "unet-init")
    dtype = np.dtype(dtype)
    params = {}
    for name, shape, kind in _param_plan(config):
        values = _init_values(shape, kind, rng).astype(dtype)
        params[name] = Tensor(values, requires_grad=True, name=name)
    return UNetModel(config, params, dtype)


def encode_target(stimulus: Stimulus, output_channels: int, dtype=np.float32) -> np.ndarray:
    """One binary map per channel: channel c marks pixels of cluster c."""
    k = stimulus.point_set.k
    if k > output_channels:
        raise ConfigError(
            f"stimulus has {k} clusters but the model represents only {output_channels}"
        )
    size = stimulus.image_size
    target = np.zeros((output_channels, size, size), dtype=dtype)
    for c in range(k):
        target[c] = stimulus.gt_label_map == c
    return target


def train(model: UNetModel, stimuli, tc: TrainConfig, progress=None):
    """Train in place; returns the per-epoch mean loss history."""
    tc.validate()
    if not stimuli:
        raise ValueError("empty training set")
    size = model.config.image_size
    images = []
    targets = []
    for idx, stim in enumerate(stimuli):
        if stim.image_size != size:
            raise ConfigError(f"stimulus {idx} is {stim.image_size}px, model wants {size}px")
        try:
            targets.append(encode_target(stim, model.config.output_channels, model.dtype))
        except ConfigError as exc:
            raise ConfigError(f"stimulus {idx}: {exc}") from exc
        images.append(stim.image.astype(model.dtype))

    shuffle = rngmod.stream(tc.seed, "train-shuffle")
    opt = Adam(model.parameters(), lr=tc.learning_rate)
    n = len(images)
    history = []
    for epoch in range(tc.epochs):
        order = shuffle.permutation(n)
        epoch_sum = 0.0
        for start in range(0, n, tc.batch_size):
            batch = order[start : start + tc.batch_size]
            opt.zero_grad()
            total = None
            for j in batch:
                loss = mse_loss(model.forward(images[j]), targets[j])
                total = loss if total is None else add(total, loss)
            total = scale(total, 1.0 / len(batch))
            value = float(total.values)
            if not np.isfinite(value):
                raise FloatingPointError(
                    f"non-finite loss at epoch {epoch}, batch starting {start}"
                )
            total.backward()
            opt.step()
            epoch_sum += value * len(batch)
        history.append(epoch_sum / n)
        if progress is not None:
            progress(epoch, history[-1])
    return model, history


def predict_labels(model: UNetModel, stimulus: Stimulus) -> ClusteringResult:
    """Decode per-point labels as the argmax output channel at each pixel."""
    t0 = time.perf_counter()
    out = model.forward(stimulus.image).values
    px = stimulus.point_set.points[:, 0].astype(int)
    py = stimulus.point_set.points[:, 1].astype(int)
    raw = np.argmax(out[:, py, px], axis=0)
    return make_result(
        raw,
        method="CNN",
        params=model.config.to_dict(),
        runtime=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(model: UNetModel, path) -> None:
    config_blob = json.dumps(model.config.to_dict(), sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(struct.pack("<I", len(config_blob)))
        f.write(config_blob)
        f.write(struct.pack("<I", len(model.params)))
        for name, t in model.params.items():
            payload = np.ascontiguousarray(t.values, dtype="<f4")
            encoded = name.encode()
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", payload.ndim))
            f.write(struct.pack("<%dI" % payload.ndim, *payload.shape))
            f.write(payload.tobytes())


def _read_exact(f, count: int, path) -> bytes:
    data = f.read(count)
    if len(data) != count:
        raise CheckpointError(f"{path}: truncated checkpoint")
    return data


def load_checkpoint(path) -> UNetModel:
    with open(path, "rb") as f:
        if _read_exact(f, 4, path) != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path}: bad magic, not a checkpoint")
        (version,) = struct.unpack("<I", _read_exact(f, 4, path))
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        (blob_len,) = struct.unpack("<I", _read_exact(f, 4, path))
        config = UNetConfig.from_dict(json.loads(_read_exact(f, blob_len, path)))
        (n_params,) = struct.unpack("<I", _read_exact(f, 4, path))
        expected = {name: shape for name, shape, _ in _param_plan(config)}
        params = {}
        for _ in range(n_params):
            (name_len,) = struct.unpack("<I", _read_exact(f, 4, path))
            name = _read_exact(f, name_len, path).decode()
            (ndim,) = struct.unpack("<I", _read_exact(f, 4, path))
            shape = struct.unpack("<%dI" % ndim, _read_exact(f, 4 * ndim, path))
            count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
            values = np.frombuffer(_read_exact(f, 4 * count, path), dtype="<f4")
            if name not in expected:
                raise CheckpointError(f"{path}: unexpected parameter {name!r}")
            if tuple(shape) != expected[name]:
                raise CheckpointError(
                    f"{path}: parameter {name!r} has shape {shape}, config implies {expected[name]}"
                )
            params[name] = Tensor(
                values.reshape(shape).astype(np.float32), requires_grad=True, name=name
            )
        if f.read(1):
            raise CheckpointError(f"{path}: trailing bytes after parameters")
    missing = sorted(set(expected) - set(params))
    if missing:
        raise CheckpointError(f"{path}: missing parameters {missing}")
    ordered = {name: params[name] for name, _, _ in _param_plan(config)}
    return UNetModel(config, ordered, np.float32)
