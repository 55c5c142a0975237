import numpy as np
import pytest

from weightfoundry import autodiff as ad
from weightfoundry.autodiff import Tensor


def numeric_grad(fn, x, h=1e-6):
    """Central differences of a scalar-valued fn at x, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + h
        up = fn(x)
        flat[i] = saved - h
        down = fn(x)
        flat[i] = saved
        out[i] = (up - down) / (2 * h)
    return grad


def check_op(build, x, rtol=1e-6, atol=1e-8):
    """build(Tensor) -> scalar Tensor; compare backward to finite differences."""
    t = Tensor(np.array(x, dtype=np.float64))
    loss = build(t)
    loss.backward()
    numeric = numeric_grad(lambda arr: float(build(Tensor(arr)).data), np.array(x))
    np.testing.assert_allclose(t.grad, numeric, rtol=rtol, atol=atol)


RNG = np.random.default_rng(0)


def test_add_mul_broadcast():
    other = RNG.normal(size=(1, 4))
    check_op(lambda t: ((t + other) * (t * 2.0 + 1.0)).sum(), RNG.normal(size=(3, 4)))


def test_sub_div_pow():
    check_op(lambda t: ((t - 0.5) / (t ** 2 + 1.0)).sum(), RNG.normal(size=(5,)))


def test_matmul_2d():
    w = RNG.normal(size=(4, 3))
    check_op(lambda t: (t @ w).sum(), RNG.normal(size=(2, 4)))


def test_matmul_batched_broadcast():
    w = RNG.normal(size=(3, 5, 2))
    check_op(lambda t: (Tensor(w) @ t).sum() + (t.swapaxes(-1, -2) @ t).sum(),
             RNG.normal(size=(3, 2, 4)))


def test_reshape_transpose():
    check_op(lambda t: (t.reshape(2, 6).transpose(1, 0) ** 2).sum(), RNG.normal(size=(3, 4)))


def test_sum_axis_keepdims():
    check_op(lambda t: (t.sum(axis=1, keepdims=True) * t).sum(), RNG.normal(size=(3, 4)))


def test_mean_axis():
    check_op(lambda t: (t.mean(axis=-1) ** 2).sum(), RNG.normal(size=(3, 4)))


def test_sqrt_exp_log():
    x = np.abs(RNG.normal(size=(4,))) + 0.5
    check_op(lambda t: (t.sqrt() + t.exp() + t.log()).sum(), x)


def test_tanh_gelu_relu():
    check_op(lambda t: (t.tanh() + t.gelu()).sum(), RNG.normal(size=(6,)))
    # keep relu inputs away from the kink
    x = RNG.normal(size=(6,))
    x[np.abs(x) < 0.1] = 0.5
    check_op(lambda t: t.relu().sum(), x)


def test_softmax():
    check_op(lambda t: (t.softmax() * np.arange(4.0)).sum(), RNG.normal(size=(3, 4)))


def test_logsumexp():
    check_op(lambda t: t.logsumexp(axis=1).sum(), RNG.normal(size=(3, 4)))
    check_op(lambda t: t.logsumexp(axis=-1).sum(), RNG.normal(size=(5,)) * 10)


def test_concat():
    b = RNG.normal(size=(2, 3))
    check_op(lambda t: (ad.concat([t, Tensor(b)]) ** 2).sum(), RNG.normal(size=(4, 3)))


def test_take_accumulates_repeated_indices():
    idx = np.array([0, 1, 1, 2])
    check_op(lambda t: (ad.take(t, idx) * np.arange(12.0).reshape(4, 3)).sum(),
             RNG.normal(size=(3, 3)))


def test_cross_entropy_matches_manual():
    logits = RNG.normal(size=(5, 3))
    labels = np.array([0, 2, 1, 1, 0])
    t = Tensor(logits)
    loss = ad.cross_entropy(t, labels)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    expected = -log_probs[np.arange(5), labels].mean()
    assert np.isclose(float(loss.data), expected, rtol=1e-12)
    loss.backward()
    numeric = numeric_grad(
        lambda arr: float(ad.cross_entropy(Tensor(arr), labels).data), logits
    )
    np.testing.assert_allclose(t.grad, numeric, rtol=1e-6, atol=1e-9)


def test_layer_norm_composition():
    def layer_norm(t):
        mu = t.mean(axis=-1, keepdims=True)
        centered = t - mu
        var = (centered * centered).mean(axis=-1, keepdims=True)
        return ((centered / (var + 1e-5).sqrt()) * np.arange(1.0, 5.0)).sum()

    check_op(layer_norm, RNG.normal(size=(3, 4)))


def test_gradient_accumulates_through_shared_node():
    x = Tensor(np.array([1.5]))
    y = x * 2.0
    loss = (y * y + y).sum()
    loss.backward()
    # d/dx (4x^2 + 2x) = 8x + 2
    np.testing.assert_allclose(x.grad, [8 * 1.5 + 2])


def test_backward_requires_scalar():
    with pytest.raises(ValueError):
        Tensor(np.zeros(3)).backward()
