"""Gradient correctness of every tape operation against finite differences."""

import numpy as np
import pytest

from opentactics import autodiff as ad
from opentactics import kernels

# Central differences at step 1e-5 certify ~1e-4 relative agreement in
# float64; tighter bounds start measuring truncation error, not correctness.
TOL = 1e-4


def check(loss_fn, params, tol=TOL):
    loss = loss_fn()
    ad.backward(loss)
    for p in params:
        numeric = ad.numerical_gradient(loss_fn, p)
        err = ad.max_relative_error(p.grad, numeric)
        assert err <= tol, f"{p.name}: rel err {err:.2e}"


@pytest.fixture(params=["compiled", "numpy"])
def backend(request, monkeypatch):
    if request.param == "numpy":
        monkeypatch.setattr(kernels, "_FORCE_NUMPY", True)
    elif kernels._ext is None:
        pytest.skip("compiled extension not built")
    return request.param


def test_add_mul_broadcast(rng):
    a = ad.parameter(rng.normal(size=(3, 4)), "a")
    b = ad.parameter(rng.normal(size=(4,)), "b")
    check(lambda: ad.tsum(ad.mul(ad.add(a, b), a)), [a, b])


def test_neg_scale_sub(rng):
    a = ad.parameter(rng.normal(size=(5,)), "a")
    b = ad.parameter(rng.normal(size=(5,)), "b")
    check(lambda: ad.tsum(ad.scale(a - b, 2.5)), [a, b])


def test_relu(rng):
    a = ad.parameter(rng.normal(size=(6, 3)) + 0.05, "a")  # keep off the kink
    check(lambda: ad.tsum(ad.mul(ad.relu(a), a)), [a])


def test_sigmoid_exp(rng):
    a = ad.parameter(rng.normal(size=(4, 2)), "a")
    check(lambda: ad.tsum(ad.sigmoid(ad.exp(a))), [a])


def test_softmax(rng):
    a = ad.parameter(rng.normal(size=(3, 7)), "a")
    w = ad.constant(rng.normal(size=(3, 7)))
    check(lambda: ad.tsum(ad.mul(ad.softmax(a), w)), [a])


def test_softmax_rows_sum_to_one(rng):
    a = ad.constant(rng.normal(size=(10, 9)) * 5)
    out = ad.softmax(a)
    np.testing.assert_allclose(out.data.sum(-1), 1.0, atol=1e-12)


def test_reshape_swapaxes_concat(rng):
    a = ad.parameter(rng.normal(size=(2, 3, 4)), "a")
    b = ad.parameter(rng.normal(size=(2, 3, 2)), "b")

    def loss():
        c = ad.concat([a, b], axis=-1)          # [2,3,6]
        c = ad.swapaxes(c, 0, 1)                # [3,2,6]
        c = ad.reshape(c, (6, 6))
        return ad.tsum(ad.mul(c, c))
    check(loss, [a, b])


def test_dense_with_bias(rng):
    x = ad.parameter(rng.normal(size=(2, 5, 3)), "x")
    w = ad.parameter(rng.normal(size=(3, 4)), "w")
    b = ad.parameter(rng.normal(size=(4,)), "b")
    check(lambda: ad.tsum(ad.mul(ad.dense(x, w, b), ad.dense(x, w, b))),
          [x, w, b])


def test_sum_mean_axes(rng):
    a = ad.parameter(rng.normal(size=(3, 4, 5)), "a")
    check(lambda: ad.tsum(ad.mul(ad.tmean(a, axis=1), ad.tmean(a, axis=1))),
          [a])
    check(lambda: ad.tsum(ad.mul(ad.tsum(a, axis=(0, 2)),
                                 ad.tsum(a, axis=(0, 2)))), [a])


def test_multihead_attention_gradients(rng, backend):
    for over_time in (False, True):
        q = ad.parameter(rng.normal(size=(2, 3, 5, 4)), "q")
        k = ad.parameter(rng.normal(size=(2, 3, 5, 4)), "k")
        v = ad.parameter(rng.normal(size=(2, 3, 5, 4)), "v")
        w = ad.constant(rng.normal(size=(2, 3, 5, 4)))

        def loss():
            y, _ = ad.multihead_attention(q, k, v, heads=2,
                                          over_time=over_time,
                                          scale_factor=0.5)
            return ad.tsum(ad.mul(y, w))
        check(loss, [q, k, v])


def test_multihead_attention_cross_lengths(rng, backend):
    # temporal attention with different query/key lengths
    q = ad.parameter(rng.normal(size=(2, 4, 5, 6)), "q")
    k = ad.parameter(rng.normal(size=(2, 3, 5, 6)), "k")
    v = ad.parameter(rng.normal(size=(2, 3, 5, 6)), "v")
    w = ad.constant(rng.normal(size=(2, 4, 5, 6)))

    def loss():
        y, _ = ad.multihead_attention(q, k, v, heads=3, over_time=True,
                                      scale_factor=0.4)
        return ad.tsum(ad.mul(y, w))
    check(loss, [q, k, v])


def test_mha_backends_agree(rng):
    q = rng.normal(size=(3, 4, 23, 8))
    k = rng.normal(size=(3, 4, 23, 8))
    v = rng.normal(size=(3, 4, 23, 8))
    for over_time in (False, True):
        y_np, p_np = kernels._np_mha_forward(q, k, v, 2, over_time, 0.5, True)
        y_any, p_any = kernels.mha_forward(q, k, v, 2, over_time, 0.5, True)
        np.testing.assert_allclose(y_any, y_np, atol=1e-12)
        np.testing.assert_allclose(p_any, p_np, atol=1e-12)
        gy = rng.normal(size=y_np.shape)
        g_np = kernels._np_mha_backward(gy, q, k, v, p_np, 2, over_time, 0.5,
                                        True)
        g_any = kernels.mha_backward(gy, q, k, v, p_any, 2, over_time, 0.5,
                                     True)
        for a, b in zip(g_any, g_np):
            np.testing.assert_allclose(a, b, atol=1e-12)


def test_gate_backends_agree(rng):
    x = rng.normal(size=(4, 5, 6))
    a = rng.normal(size=(4, 5, 6))
    b = rng.normal(size=(4, 5, 6))
    out_any, g_any = kernels.gate_forward(x, a, b)
    out_np, g_np = kernels._np_gate_forward(x, a, b)
    np.testing.assert_allclose(out_any, out_np, atol=1e-12)
    grad = rng.normal(size=x.shape)
    for ga, gn in zip(kernels.gate_backward(grad, g_any, a, b),
                      kernels._np_gate_backward(grad, g_np, a, b)):
        np.testing.assert_allclose(ga, gn, atol=1e-12)


def test_gated_mix_gradients(rng, backend):
    x = ad.parameter(rng.normal(size=(3, 4)), "x")
    a = ad.parameter(rng.normal(size=(3, 4)), "a")
    b = ad.parameter(rng.normal(size=(3, 4)), "b")
    check(lambda: ad.tsum(ad.mul(ad.gated_mix(x, a, b),
                                 ad.gated_mix(x, a, b))), [x, a, b])


def test_dense_bcast_gradients(rng):
    x = ad.parameter(rng.normal(size=(2, 3, 4, 5)), "x")
    w = ad.parameter(rng.normal(size=(5, 6)), "w")
    e = ad.parameter(rng.normal(size=(2, 3, 1, 6)), "e")
    check(lambda: ad.tsum(ad.mul(ad.dense_bcast(x, w, e),
                                 ad.dense_bcast(x, w, e))), [x, w, e])


def test_scalar_ops_preserve_float32(rng):
    a = ad.parameter(rng.normal(size=(3,)).astype(np.float32), "a")
    out = (1.0 - a) * 2.0 + 0.5
    assert out.data.dtype == np.float32
    loss = ad.tsum(ad.mul(out, out))
    ad.backward(loss)
    assert a.grad.dtype == np.float32


def test_attention_probabilities_normalized(rng, backend):
    q = ad.constant(rng.normal(size=(5, 2, 9, 4)) * 3)
    k = ad.constant(rng.normal(size=(5, 2, 9, 4)) * 3)
    v = ad.constant(rng.normal(size=(5, 2, 9, 4)))
    _, p = ad.multihead_attention(q, k, v, heads=2, over_time=False,
                                  scale_factor=0.5)
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(-1), 1.0, atol=1e-9)


def test_float32_mha_close_to_float64(rng):
    q = rng.normal(size=(3, 4, 7, 8))
    k = rng.normal(size=(3, 4, 7, 8))
    v = rng.normal(size=(3, 4, 7, 8))
    y64, _ = kernels.mha_forward(q, k, v, 2, False, 0.35, True)
    y32, _ = kernels.mha_forward(q.astype(np.float32), k.astype(np.float32),
                                 v.astype(np.float32), 2, False, 0.35, True)
    assert y32.dtype == np.float32
    np.testing.assert_allclose(y32, y64, atol=1e-4)


def test_backward_requires_scalar(rng):
    a = ad.parameter(rng.normal(size=(3,)), "a")
    with pytest.raises(ValueError):
        ad.backward(ad.mul(a, a))


def test_grad_overwritten_not_accumulated(rng):
    a = ad.parameter(rng.normal(size=(3,)), "a")
    for _ in range(2):
        loss = ad.tsum(ad.mul(a, a))
        ad.backward(loss)
    np.testing.assert_allclose(a.grad, 2 * a.data, atol=1e-12)


def test_shared_subexpression_accumulates_within_pass(rng):
    a = ad.parameter(np.array([2.0]), "a")
    b = ad.mul(a, a)          # a^2
    loss = ad.tsum(ad.add(b, b))  # 2 a^2 -> d/da = 4a
    ad.backward(loss)
    np.testing.assert_allclose(a.grad, [8.0])
