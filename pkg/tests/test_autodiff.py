import numpy as np
import pytest

from clusterlab.autodiff import (
    Adam,
    Tensor,
    add,
    concat_channels,
    conv2d,
    finite_diff_check,
    max_pool2x2,
    mse_loss,
    pointwise_multiply,
    relu,
    scale,
    sigmoid,
    tensor,
    upsample_nearest2x,
)
from clusterlab.autodiff.ops import ShapeError


# ---------------------------------------------------------------------------
# Loop reference implementations. Deliberately scalar and nested so they
# share nothing with the vectorized kernels under test.


def conv2d_loops(x, w, b):
    f, c, k, _ = w.shape
    _, hh, ww = x.shape
    p = k // 2
    out = np.empty((f, hh, ww), dtype=x.dtype)
    for fi in range(f):
        for y in range(hh):
            for xx in range(ww):
                acc = b[fi]
                for ci in range(c):
                    for ky in range(k):
                        for kx in range(k):
                            iy, ix = y + ky - p, xx + kx - p
                            if 0 <= iy < hh and 0 <= ix < ww:
                                acc += w[fi, ci, ky, kx] * x[ci, iy, ix]
                out[fi, y, xx] = acc
    return out


def conv2d_grads_loops(x, w, b, g):
    f, c, k, _ = w.shape
    _, hh, ww = x.shape
    p = k // 2
    dx = np.zeros_like(x)
    dw = np.zeros_like(w)
    db = np.zeros_like(b)
    for fi in range(f):
        for y in range(hh):
            for xx in range(ww):
                db[fi] += g[fi, y, xx]
                for ci in range(c):
                    for ky in range(k):
                        for kx in range(k):
                            iy, ix = y + ky - p, xx + kx - p
                            if 0 <= iy < hh and 0 <= ix < ww:
                                dw[fi, ci, ky, kx] += g[fi, y, xx] * x[ci, iy, ix]
                                dx[ci, iy, ix] += g[fi, y, xx] * w[fi, ci, ky, kx]
    return dx, dw, db


def pool_loops(x):
    c, hh, ww = x.shape
    out = np.empty((c, hh // 2, ww // 2), dtype=x.dtype)
    arg = np.empty((c, hh // 2, ww // 2), dtype=np.int64)
    for ci in range(c):
        for y in range(hh // 2):
            for xx in range(ww // 2):
                vals = [
                    x[ci, 2 * y, 2 * xx],
                    x[ci, 2 * y, 2 * xx + 1],
                    x[ci, 2 * y + 1, 2 * xx],
                    x[ci, 2 * y + 1, 2 * xx + 1],
                ]
                best = 0
                for j in range(1, 4):
                    if vals[j] > vals[best]:
                        best = j
                out[ci, y, xx] = vals[best]
                arg[ci, y, xx] = best
    return out, arg


def pool_grad_loops(x, g):
    _, arg = pool_loops(x)
    dx = np.zeros_like(x)
    c, h2, w2 = arg.shape
    for ci in range(c):
        for y in range(h2):
            for xx in range(w2):
                j = arg[ci, y, xx]
                dx[ci, 2 * y + j // 2, 2 * xx + j % 2] = g[ci, y, xx]
    return dx


def upsample_grad_loops(g):
    c, hh, ww = g.shape
    dx = np.empty((c, hh // 2, ww // 2), dtype=g.dtype)
    for ci in range(c):
        for y in range(hh // 2):
            for xx in range(ww // 2):
                dx[ci, y, xx] = (
                    (g[ci, 2 * y, 2 * xx] + g[ci, 2 * y, 2 * xx + 1])
                    + g[ci, 2 * y + 1, 2 * xx]
                ) + g[ci, 2 * y + 1, 2 * xx + 1]
    return dx


# ---------------------------------------------------------------------------
# conv2d


def test_conv_identity_1x1():
    rng = np.random.default_rng(0)
    x = tensor(rng.standard_normal((3, 5, 5)))
    w = tensor(np.eye(3).reshape(3, 3, 1, 1))
    b = tensor(np.zeros(3))
    out = conv2d(x, w, b)
    assert np.array_equal(out.values, x.values)


def test_conv_zero_kernel():
    rng = np.random.default_rng(1)
    x = tensor(rng.standard_normal((2, 4, 4)))
    out = conv2d(x, tensor(np.zeros((3, 2, 3, 3))), tensor(np.zeros(3)))
    assert np.all(out.values == 0.0)


def test_conv_forward_matches_loops_bitwise():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 4, 4))
    w = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    out = conv2d(tensor(x), tensor(w), tensor(b))
    ref = conv2d_loops(x, w, b)
    assert np.array_equal(out.values, ref)


def test_conv_forward_matches_loops_bitwise_5x5_kernel():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((3, 6, 6))
    w = rng.standard_normal((2, 3, 5, 5))
    b = rng.standard_normal(2)
    out = conv2d(tensor(x), tensor(w), tensor(b))
    assert np.array_equal(out.values, conv2d_loops(x, w, b))


def test_conv_backward_matches_loops():
    rng = np.random.default_rng(4)
    xv = rng.standard_normal((2, 5, 5))
    wv = rng.standard_normal((4, 2, 3, 3))
    bv = rng.standard_normal(4)
    x, w, b = tensor(xv, True), tensor(wv, True), tensor(bv, True)
    out = conv2d(x, w, b)
    g = rng.standard_normal(out.values.shape)
    out.backward(g)
    dx, dw, db = conv2d_grads_loops(xv, wv, bv, g)
    np.testing.assert_allclose(x.grad, dx, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(w.grad, dw, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(b.grad, db, rtol=1e-12, atol=1e-12)


def test_conv_fast_path_close_to_reference():
    rng = np.random.default_rng(5)
    xv = rng.standard_normal((4, 8, 8))
    wv = rng.standard_normal((6, 4, 3, 3)) * 0.3
    bv = rng.standard_normal(6) * 0.1
    ref = conv2d(tensor(xv), tensor(wv), tensor(bv)).values
    fast = conv2d(
        tensor(xv, dtype=np.float32),
        tensor(wv, dtype=np.float32),
        tensor(bv, dtype=np.float32),
    ).values
    np.testing.assert_allclose(fast, ref, rtol=1e-4, atol=1e-5)


def test_conv_shape_errors():
    x = tensor(np.zeros((2, 4, 4)))
    with pytest.raises(ShapeError):
        conv2d(x, tensor(np.zeros((3, 5, 3, 3))), tensor(np.zeros(3)))
    with pytest.raises(ShapeError):
        conv2d(x, tensor(np.zeros((3, 2, 2, 2))), tensor(np.zeros(3)))
    with pytest.raises(ShapeError):
        conv2d(x, tensor(np.zeros((3, 2, 3, 3))), tensor(np.zeros(4)))


# ---------------------------------------------------------------------------
# pooling and upsampling


def test_pool_single_window():
    x = tensor(np.array([[[1.0, 2.0], [3.0, 4.0]]]))
    out = max_pool2x2(x)
    assert out.values.shape == (1, 1, 1)
    assert out.values[0, 0, 0] == 4.0


def test_pool_constant_ties_to_first_element():
    x = tensor(np.ones((1, 4, 4)), requires_grad=True)
    out = max_pool2x2(x)
    out.backward(np.ones_like(out.values))
    expected = np.zeros((1, 4, 4))
    expected[0, 0::2, 0::2] = 1.0
    assert np.array_equal(x.grad, expected)


def test_pool_matches_loops_exactly():
    rng = np.random.default_rng(6)
    xv = rng.standard_normal((3, 8, 8))
    out = max_pool2x2(tensor(xv))
    ref, _ = pool_loops(xv)
    assert np.array_equal(out.values, ref)


def test_pool_backward_matches_loops():
    rng = np.random.default_rng(7)
    xv = rng.standard_normal((3, 8, 8))
    x = tensor(xv, requires_grad=True)
    out = max_pool2x2(x)
    g = rng.standard_normal(out.values.shape)
    out.backward(g)
    assert np.array_equal(x.grad, pool_grad_loops(xv, g))


def test_pool_rejects_odd_dims():
    with pytest.raises(ShapeError):
        max_pool2x2(tensor(np.zeros((1, 5, 4))))


def test_upsample_replicates():
    out = upsample_nearest2x(tensor(np.array([[[7.0]]])))
    assert np.array_equal(out.values, np.full((1, 2, 2), 7.0))


def test_upsample_then_pool_is_identity_on_any_input():
    rng = np.random.default_rng(8)
    xv = rng.standard_normal((2, 4, 4))
    roundtrip = max_pool2x2(upsample_nearest2x(tensor(xv)))
    assert np.array_equal(roundtrip.values, xv)


def test_upsample_backward_matches_loops():
    rng = np.random.default_rng(9)
    x = tensor(rng.standard_normal((2, 3, 5)), requires_grad=True)
    out = upsample_nearest2x(x)
    g = rng.standard_normal(out.values.shape)
    out.backward(g)
    assert np.array_equal(x.grad, upsample_grad_loops(g))


# ---------------------------------------------------------------------------
# elementwise ops


def test_relu_values():
    out = relu(tensor(np.array([-2.0, 0.0, 3.0])))
    assert np.array_equal(out.values, [0.0, 0.0, 3.0])


def test_sigmoid_values():
    out = sigmoid(tensor(np.array([0.0, -800.0, 800.0])))
    assert out.values[0] == 0.5
    assert out.values[1] == pytest.approx(0.0, abs=1e-300)
    assert out.values[2] == pytest.approx(1.0, abs=1e-12)


def test_relu_sigmoid_gradcheck():
    rng = np.random.default_rng(10)
    # Inputs bounded away from the ReLU kink by much more than h.
    xv = rng.standard_normal((2, 4, 4))
    xv[np.abs(xv) < 0.05] = 0.05
    target = rng.standard_normal((2, 4, 4))
    x = tensor(xv, requires_grad=True)

    report = finite_diff_check(
        lambda: mse_loss(sigmoid(relu(x)), target), [x], h=1e-6, tol=1e-6
    )
    assert report.passed, report.summary()


def test_concat_shapes_and_grads():
    rng = np.random.default_rng(11)
    a = tensor(rng.standard_normal((2, 4, 4)), requires_grad=True)
    b = tensor(rng.standard_normal((3, 4, 4)), requires_grad=True)
    out = concat_channels(a, b)
    assert out.values.shape == (5, 4, 4)
    g = rng.standard_normal((5, 4, 4))
    out.backward(g)
    assert np.array_equal(a.grad, g[:2])
    assert np.array_equal(b.grad, g[2:])


def test_concat_with_empty_is_identity():
    x = tensor(np.ones((2, 3, 3)))
    out = concat_channels(x, tensor(np.zeros((0, 3, 3))))
    assert np.array_equal(out.values, x.values)


def test_concat_rejects_spatial_mismatch():
    with pytest.raises(ShapeError):
        concat_channels(tensor(np.zeros((1, 4, 4))), tensor(np.zeros((1, 4, 5))))


def test_pointwise_multiply_mask_semantics():
    rng = np.random.default_rng(12)
    av = rng.standard_normal((3, 4, 4))
    a = tensor(av, requires_grad=True)
    ones = tensor(np.ones((1, 4, 4)))
    assert np.array_equal(pointwise_multiply(a, ones).values, av)

    zeros = tensor(np.zeros((1, 4, 4)))
    out = pointwise_multiply(a, zeros)
    out.backward(np.ones_like(out.values))
    assert np.all(out.values == 0.0)
    assert np.all(a.grad == 0.0)


def test_pointwise_multiply_gradcheck_both_operands():
    rng = np.random.default_rng(13)
    a = tensor(rng.standard_normal((3, 4, 4)), requires_grad=True)
    b = tensor(rng.standard_normal((1, 4, 4)), requires_grad=True)
    target = rng.standard_normal((3, 4, 4))
    report = finite_diff_check(
        lambda: mse_loss(pointwise_multiply(a, b), target), [a, b], h=1e-6, tol=1e-6
    )
    assert report.passed, report.summary()


# ---------------------------------------------------------------------------
# loss, graph mechanics


def test_mse_values():
    x = tensor(np.full((2, 3), 5.0))
    assert float(mse_loss(x, np.full((2, 3), 5.0)).values) == 0.0
    assert float(mse_loss(x, np.full((2, 3), 3.0)).values) == 4.0


def test_scalar_loss_sum_keeps_dtype():
    # Summing 0-d losses must not widen the dtype: numpy scalar arithmetic
    # on 0-d arrays leaks np.float32 scalars, and a batch of three or more
    # once silently promoted the running total to float64.
    losses = [
        mse_loss(tensor(np.full((2, 2), v), dtype=np.float32, requires_grad=True),
                 np.zeros((2, 2), dtype=np.float32))
        for v in (1.0, 2.0, 3.0)
    ]
    total = losses[0]
    for loss in losses[1:]:
        total = add(total, loss)
    assert total.values.dtype == np.float32
    total.backward()
    assert losses[0].parents[0].grad.dtype == np.float32


def test_mse_gradient_formula():
    rng = np.random.default_rng(14)
    pv = rng.standard_normal((3, 5))
    t = rng.standard_normal((3, 5))
    p = tensor(pv, requires_grad=True)
    loss = mse_loss(p, t)
    loss.backward()
    np.testing.assert_allclose(p.grad, 2.0 * (pv - t) / pv.size, rtol=1e-14)


def test_mse_finite_differences_rounding_only():
    # Quadratic loss: the central difference is exact up to rounding,
    # so the reported error sits at machine-epsilon scale.
    rng = np.random.default_rng(15)
    x = tensor(rng.standard_normal((4, 4)), requires_grad=True)
    t = rng.standard_normal((4, 4))
    report = finite_diff_check(lambda: mse_loss(x, t), [x], h=1e-5, tol=1e-4)
    assert report.max_rel_err < 1e-8, report.summary()


def test_gradcheck_skips_kink_straddling_entries():
    # The first coordinate sits half a step from the ReLU kink, so +-h
    # straddles it and the one-sided slopes disagree; the checker must
    # exclude that entry instead of reporting a bogus mismatch.
    x = tensor(np.array([0.5e-5, 1.0]), requires_grad=True)
    report = finite_diff_check(
        lambda: mse_loss(relu(x), np.zeros(2)), [x], h=1e-5, tol=1e-4
    )
    assert report.total_skipped == 1
    assert report.passed, report.summary()


def test_gradcheck_flags_wrong_gradient_despite_kink_exclusion():
    # The exclusion rule never consults the analytic gradient, so a wrong
    # backward at smooth points must still fail the check.
    x = tensor(np.array([1.0, 2.0]), requires_grad=True)

    def loss_fn():
        out = Tensor(np.asarray((x.values ** 2).mean()), requires_grad=True, parents=(x,))
        out.grad_fn = lambda g: x.accumulate_grad(g * 0.7 * x.values)  # wrong factor
        return out

    report = finite_diff_check(loss_fn, [x], h=1e-5, tol=1e-4)
    assert report.total_skipped == 0
    assert not report.passed


def test_reused_node_accumulates_gradient():
    x = tensor(np.array([3.0]), requires_grad=True)
    out = add(x, x)
    out.backward(np.array([1.0]))
    assert np.array_equal(x.grad, [2.0])


def test_scale_backward():
    x = tensor(np.array([1.0, -2.0]), requires_grad=True)
    out = scale(x, 0.25)
    out.backward(np.array([4.0, 4.0]))
    assert np.array_equal(out.values, [0.25, -0.5])
    assert np.array_equal(x.grad, [1.0, 1.0])


def test_composite_graph_gradcheck():
    rng = np.random.default_rng(16)
    xv = rng.standard_normal((2, 4, 4))
    xv[np.abs(xv) < 0.05] = 0.05
    x = tensor(xv, requires_grad=True)
    w = tensor(rng.standard_normal((2, 2, 3, 3)) * 0.5, requires_grad=True)
    b = tensor(rng.standard_normal(2) * 0.1, requires_grad=True)
    target = rng.standard_normal((2, 8, 8))

    def loss_fn():
        y = relu(conv2d(x, w, b))
        y = upsample_nearest2x(y)
        return mse_loss(sigmoid(y), target)

    report = finite_diff_check(loss_fn, [x, w, b], h=1e-5, tol=1e-4)
    assert report.passed, report.summary()


# ---------------------------------------------------------------------------
# Adam


def test_adam_zero_grad_is_noop():
    p = tensor(np.array([1.0, 2.0]), requires_grad=True)
    opt = Adam([p])
    p.grad = np.zeros(2)
    opt.step()
    assert opt.t == 1
    assert np.array_equal(p.values, [1.0, 2.0])


def test_adam_first_step_is_lr_times_sign():
    # With bias correction, m_hat = g and v_hat = g*g on step one, so
    # the update is lr * g / (|g| + eps) which is lr * sign(g) up to eps.
    p = tensor(np.array([0.5, -0.5, 2.0]), requires_grad=True)
    opt = Adam([p], lr=0.001)
    p.grad = np.array([0.3, -0.7, 4.0])
    opt.step()
    expected = np.array([0.5, -0.5, 2.0]) - 0.001 * np.array([1.0, -1.0, 1.0])
    np.testing.assert_allclose(p.values, expected, atol=1e-9)


def test_adam_rejects_nonfinite_gradient():
    p = tensor(np.array([1.0]), requires_grad=True, name="w")
    opt = Adam([p])
    p.grad = np.array([np.nan])
    with pytest.raises(FloatingPointError):
        opt.step()


def test_adam_matches_hand_computed_second_step():
    p = tensor(np.array([1.0]), requires_grad=True)
    opt = Adam([p], lr=0.01)
    m = v = 0.0
    val = 1.0
    for t, g in [(1, 0.5), (2, -0.25)]:
        p.grad = np.array([g])
        opt.step()
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        m_hat = m / (1 - 0.9**t)
        v_hat = v / (1 - 0.999**t)
        val -= 0.01 * m_hat / (np.sqrt(v_hat) + 1e-8)
    np.testing.assert_allclose(p.values, [val], rtol=1e-12)
