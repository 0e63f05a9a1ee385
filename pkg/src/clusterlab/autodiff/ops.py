"""Differentiable operators for the U-Net.

Every op takes and returns Tensor values laid out channels-first
(C, H, W); conv kernels are (F, C, kh, kw). Two execution paths share
one graph structure: float64 tensors run reference kernels whose
accumulation order matches a naive nested-loop implementation term for
term, float32 tensors run an im2col/GEMM fast path. The backward pass is
shared; only the forward differs.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .tensor import Tensor


class ShapeError(ValueError):
    pass


def _check_same_dtype(*tensors):
    dtypes = {t.values.dtype for t in tensors}
    if len(dtypes) > 1:
        raise ShapeError(f"mixed dtypes in one op: {sorted(map(str, dtypes))}")


def _pad_spatial(values: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return values
    c, h, w = values.shape
    out = np.zeros((c, h + 2 * p, w + 2 * p), dtype=values.dtype)
    out[:, p : p + h, p : p + w] = values
    return out


def _im2col(padded: np.ndarray, k: int, h: int, w: int) -> np.ndarray:
    """(C, H+2p, W+2p) -> (C*k*k, H*W) patch matrix."""
    c = padded.shape[0]
    s0, s1, s2 = padded.strides
    windows = as_strided(padded, shape=(c, k, k, h, w), strides=(s0, s1, s2, s1, s2))
    return windows.reshape(c * k * k, h * w)


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """Same-padded cross-correlation with an odd square kernel."""
    _check_same_dtype(x, kernel, bias)
    if x.values.ndim != 3 or kernel.values.ndim != 4:
        raise ShapeError("conv2d wants (C,H,W) input and (F,C,k,k) kernel")
    c, h, w = x.values.shape
    f, kc, kh, kw = kernel.values.shape
    if kc != c:
        raise ShapeError(f"kernel expects {kc} input channels, input has {c}")
    if kh != kw or kh % 2 == 0:
        raise ShapeError("kernel must be square with odd side")
    if bias.values.shape != (f,):
        raise ShapeError(f"bias shape {bias.values.shape} != ({f},)")
    k = kh
    p = k // 2
    padded = _pad_spatial(x.values, p)

    if x.values.dtype == np.float64:
        # Reference path: accumulate in (c, ky, kx) order, one fused
        # multiply-add per term, so results are bit-identical to a
        # scalar nested-loop evaluation in the same order.
        out = np.empty((f, h, w), dtype=np.float64)
        out[:] = bias.values[:, None, None]
        for ci in range(c):
            for ky in range(k):
                for kx in range(k):
                    out += (
                        kernel.values[:, ci, ky, kx][:, None, None]
                        * padded[ci, ky : ky + h, kx : kx + w][None, :, :]
                    )
    else:
        cols = _im2col(padded, k, h, w)
        out = (kernel.values.reshape(f, -1) @ cols).reshape(f, h, w)
        out += bias.values[:, None, None]

    requires = x.requires_grad or kernel.requires_grad or bias.requires_grad
    result = Tensor(out, requires_grad=requires, parents=(x, kernel, bias))

    def grad_fn(g):
        gflat = g.reshape(f, h * w)
        if kernel.requires_grad:
            cols_b = _im2col(padded, k, h, w)
            kernel.accumulate_grad((gflat @ cols_b.T).reshape(f, c, k, k))
        if bias.requires_grad:
            bias.accumulate_grad(g.sum(axis=(1, 2)))
        if x.requires_grad:
            dcols = (kernel.values.reshape(f, -1).T @ gflat).reshape(c, k, k, h, w)
            gp = np.zeros_like(padded)
            for ky in range(k):
                for kx in range(k):
                    gp[:, ky : ky + h, kx : kx + w] += dcols[:, ky, kx]
            x.accumulate_grad(gp[:, p : p + h, p : p + w])

    result.grad_fn = grad_fn if requires else None
    return result


def max_pool2x2(x: Tensor) -> Tensor:
    c, h, w = x.values.shape
    if h % 2 or w % 2:
        raise ShapeError(f"max_pool2x2 needs even spatial dims, got {h}x{w}")
    h2, w2 = h // 2, w // 2
    windows = x.values.reshape(c, h2, 2, w2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h2, w2, 4)
    # argmax returns the first maximum, giving the documented
    # first-index tie-break within each (row-major) window.
    idx = windows.argmax(axis=3)
    out = np.take_along_axis(windows, idx[..., None], axis=3)[..., 0]
    result = Tensor(out, requires_grad=x.requires_grad, parents=(x,))

    def grad_fn(g):
        if not x.requires_grad:
            return
        scatter = np.zeros((c, h2, 2, w2, 2), dtype=g.dtype)
        cg, hg, wg = np.ogrid[:c, :h2, :w2]
        scatter[cg, hg, idx // 2, wg, idx % 2] = g
        x.accumulate_grad(scatter.reshape(c, h, w))

    result.grad_fn = grad_fn if x.requires_grad else None
    return result


def upsample_nearest2x(x: Tensor) -> Tensor:
    out = np.repeat(np.repeat(x.values, 2, axis=1), 2, axis=2)
    result = Tensor(out, requires_grad=x.requires_grad, parents=(x,))

    def grad_fn(g):
        if not x.requires_grad:
            return
        c, h, w = x.values.shape
        r = g.reshape(c, h, 2, w, 2)
        # Left-to-right sum of the four replicas, matching the loop
        # reference ordering exactly.
        gin = ((r[:, :, 0, :, 0] + r[:, :, 0, :, 1]) + r[:, :, 1, :, 0]) + r[:, :, 1, :, 1]
        x.accumulate_grad(gin)

    result.grad_fn = grad_fn if x.requires_grad else None
    return result


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.values, 0)
    result = Tensor(out, requires_grad=x.requires_grad, parents=(x,))

    def grad_fn(g):
        if x.requires_grad:
            x.accumulate_grad(g * (x.values > 0))

    result.grad_fn = grad_fn if x.requires_grad else None
    return result


def sigmoid(x: Tensor) -> Tensor:
    v = x.values
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    result = Tensor(out, requires_grad=x.requires_grad, parents=(x,))

    def grad_fn(g):
        if x.requires_grad:
            x.accumulate_grad(g * out * (1.0 - out))

    result.grad_fn = grad_fn if x.requires_grad else None
    return result


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b)
    if a.values.shape[1:] != b.values.shape[1:]:
        raise ShapeError(
            f"spatial mismatch in concat: {a.values.shape} vs {b.values.shape}"
        )
    ca = a.values.shape[0]
    out = np.concatenate([a.values, b.values], axis=0)
    requires = a.requires_grad or b.requires_grad
    result = Tensor(out, requires_grad=requires, parents=(a, b))

    def grad_fn(g):
        if a.requires_grad:
            a.accumulate_grad(g[:ca])
        if b.requires_grad:
            b.accumulate_grad(g[ca:])

    result.grad_fn = grad_fn if requires else None
    return result


def pointwise_multiply(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; b may be (1,H,W) broadcast over a's channels."""
    _check_same_dtype(a, b)
    sa, sb = a.values.shape, b.values.shape
    if sa != sb and not (len(sb) == 3 and sb[0] == 1 and sb[1:] == sa[1:]):
        raise ShapeError(f"cannot broadcast {sb} over {sa}")
    out = a.values * b.values
    requires = a.requires_grad or b.requires_grad
    result = Tensor(out, requires_grad=requires, parents=(a, b))

    def grad_fn(g):
        if a.requires_grad:
            a.accumulate_grad(g * b.values)
        if b.requires_grad:
            gb = g * a.values
            if sb != sa:
                gb = gb.sum(axis=0, keepdims=True)
            b.accumulate_grad(gb)

    result.grad_fn = grad_fn if requires else None
    return result


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b)
    if a.values.shape != b.values.shape:
        raise ShapeError(f"add shape mismatch: {a.values.shape} vs {b.values.shape}")
    requires = a.requires_grad or b.requires_grad
    result = Tensor(a.values + b.values, requires_grad=requires, parents=(a, b))

    def grad_fn(g):
        if a.requires_grad:
            a.accumulate_grad(g)
        if b.requires_grad:
            b.accumulate_grad(g)

    result.grad_fn = grad_fn if requires else None
    return result


def scale(x: Tensor, factor: float) -> Tensor:
    factor = x.values.dtype.type(factor)
    result = Tensor(x.values * factor, requires_grad=x.requires_grad, parents=(x,))

    def grad_fn(g):
        if x.requires_grad:
            x.accumulate_grad(g * factor)

    result.grad_fn = grad_fn if x.requires_grad else None
    return result


def mse_loss(pred: Tensor, target) -> Tensor:
    """Mean squared error over all elements; returns a scalar tensor."""
    if not isinstance(target, Tensor):
        target = Tensor(np.asarray(target, dtype=pred.values.dtype))
    _check_same_dtype(pred, target)
    if pred.values.shape != target.values.shape:
        raise ShapeError(
            f"mse shape mismatch: {pred.values.shape} vs {target.values.shape}"
        )
    diff = pred.values - target.values
    n = diff.size
    out = np.asarray((diff * diff).mean(), dtype=pred.values.dtype)
    requires = pred.requires_grad or target.requires_grad
    result = Tensor(out, requires_grad=requires, parents=(pred, target))

    def grad_fn(g):
        coeff = g * pred.values.dtype.type(2.0 / n)
        if pred.requires_grad:
            pred.accumulate_grad(coeff * diff)
        if target.requires_grad:
            target.accumulate_grad(-coeff * diff)

    result.grad_fn = grad_fn if requires else None
    return result
