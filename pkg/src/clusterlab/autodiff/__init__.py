"""Minimal reverse-mode autodiff: just what a U-Net needs."""

from .adam import Adam
from .gradcheck import GradCheckReport, finite_diff_check, relative_error
from .ops import (
    ShapeError,
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
from .tensor import Tensor, parameter, tensor

__all__ = [
    "Adam",
    "GradCheckReport",
    "ShapeError",
    "Tensor",
    "add",
    "concat_channels",
    "conv2d",
    "finite_diff_check",
    "max_pool2x2",
    "mse_loss",
    "parameter",
    "pointwise_multiply",
    "relative_error",
    "relu",
    "scale",
    "sigmoid",
    "tensor",
    "upsample_nearest2x",
]
