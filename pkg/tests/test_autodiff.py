import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from fairtab import autodiff as ad
from oracles import central_difference, relative_gap


def t64(x):
    return ad.Tensor(np.asarray(x, dtype=np.float64))


def test_leaky_relu_default_slope():
    out = ad.leaky_relu(t64([-1.0, 2.0]), slope=0.01)
    assert_allclose(out.data, [-0.01, 2.0])


def test_relu_values():
    assert_array_equal(ad.relu(t64([-3.0, 0.0, 5.0])).data, [0.0, 0.0, 5.0])


def test_matmul_shape():
    out = ad.matmul(t64(np.ones((2, 3))), t64(np.ones((3, 1))))
    assert out.shape == (2, 1)


def test_matmul_shape_mismatch():
    with pytest.raises(ValueError):
        ad.matmul(t64(np.ones((2, 3))), t64(np.ones((2, 1))))


def test_square_gradient_analytic():
    x = t64(3.0)
    ad.backward(ad.square(x))
    assert_allclose(x.grad, 6.0)


def test_mean_matvec_matches_finite_difference():
    rng = np.random.default_rng(0)
    w = t64(rng.standard_normal((4, 4)))
    v = rng.standard_normal((4, 1))

    loss = ad.mean(ad.matmul(w, t64(v)))
    ad.backward(loss)

    fd = central_difference(lambda: float(np.mean(w.data @ v)), [w.data])[0]
    assert relative_gap(w.grad, fd) < 1e-6


def test_disconnected_leaf_gets_zero_gradient():
    x = t64([1.0, 2.0])
    y = t64([3.0, 4.0])
    ad.backward(ad.mean(ad.square(x)))
    assert y.grad is None
    assert_array_equal(ad.grad_of(y), np.zeros(2))


def test_backward_requires_scalar_root():
    with pytest.raises(ValueError):
        ad.backward(t64([1.0, 2.0]))


def test_gradient_accumulates_through_shared_node():
    x = t64(2.0)
    y = ad.add(ad.square(x), ad.mul(x, t64(3.0)))  # x^2 + 3x
    ad.backward(y)
    assert_allclose(x.grad, 7.0)


def test_broadcast_add_bias_gradient():
    x = t64(np.ones((3, 2)))
    b = t64(np.zeros(2))
    ad.backward(ad.mean(ad.add(x, b)))
    assert b.grad.shape == (2,)
    assert_allclose(b.grad, [0.5, 0.5])


@settings(max_examples=60, deadline=None)
@given(
    rows=st.integers(1, 8),
    inner=st.integers(1, 8),
    cols=st.integers(1, 8),
    seed=st.integers(0, 2**31),
)
def test_random_graph_gradients_match_finite_differences(rows, inner, cols, seed):
    rng = np.random.default_rng(seed)
    a = t64(rng.standard_normal((rows, inner)))
    b = t64(rng.standard_normal((inner, cols)))
    c = t64(rng.standard_normal((rows, cols)))

    def build():
        h = ad.leaky_relu(ad.matmul(a, b), 0.01)
        return ad.mean(ad.add(ad.square(h), ad.mul(h, c)))

    ad.backward(build())
    fd = central_difference(lambda: float(build().data), [a.data, b.data, c.data])
    for leaf, ref in zip((a, b, c), fd):
        assert relative_gap(leaf.grad, ref) < 1e-5


@settings(max_examples=40, deadline=None)
@given(rows=st.integers(1, 6), cols=st.integers(2, 6), seed=st.integers(0, 2**31))
def test_softmax_and_log_softmax_gradients(rows, cols, seed):
    rng = np.random.default_rng(seed)
    x = t64(rng.standard_normal((rows, cols)))
    w = t64(rng.standard_normal((rows, cols)))

    def soft_loss():
        return ad.mean(ad.mul(ad.softmax(x), w))

    ad.backward(soft_loss())
    fd = central_difference(lambda: float(soft_loss().data), [x.data])[0]
    assert relative_gap(x.grad, fd) < 1e-6

    ad.zero_grads([x])

    def ls_loss():
        return ad.mean(ad.mul(ad.log_softmax(x), w))

    ad.backward(ls_loss())
    fd = central_difference(lambda: float(ls_loss().data), [x.data])[0]
    assert relative_gap(x.grad, fd) < 1e-6


def test_concat_and_slice_gradients():
    a = t64(np.arange(6, dtype=float).reshape(2, 3))
    b = t64(np.arange(4, dtype=float).reshape(2, 2))
    out = ad.concat([a, b], axis=1)
    assert out.shape == (2, 5)
    ad.backward(ad.mean(ad.slice_cols(out, 3, 5)))
    assert_allclose(a.grad, np.zeros((2, 3)))
    assert_allclose(b.grad, np.full((2, 2), 0.25))


def test_non_finite_forward_raises():
    big = ad.Tensor(np.array([1e38], dtype=np.float32))
    with np.errstate(over="ignore"), pytest.raises(ad.NonFiniteError):
        ad.mul(big, big)


def test_no_grad_blocks_recording():
    x = t64([1.0, 2.0])
    with ad.no_grad():
        y = ad.mean(ad.square(x))
    assert y._parents == ()


# ---------------------------------------------------------------------------
# Gumbel-softmax


def test_gumbel_equal_logits_zero_noise_uniform():
    logits = t64(np.zeros((1, 4)))
    out = ad.gumbel_softmax_with_noise(logits, np.zeros((1, 4)), tau=0.7)
    assert_allclose(out.data, np.full((1, 4), 0.25))


def test_gumbel_sharpens_at_low_temperature():
    logits = t64(np.array([[10.0, 0.0]]))
    out = ad.gumbel_softmax_with_noise(logits, np.zeros((1, 2)), tau=0.2)
    assert_allclose(out.data, [[1.0, 0.0]], atol=1e-9)


def test_gumbel_hard_mode_is_one_hot_with_soft_gradient():
    rng = np.random.default_rng(5)
    logits = t64(rng.standard_normal((6, 3)))
    out = ad.gumbel_softmax(logits, tau=0.2, rng=rng, hard=True)
    assert_array_equal(np.sort(out.data, axis=1)[:, :2], np.zeros((6, 2)))
    assert_array_equal(out.data.sum(axis=1), np.ones(6))
    ad.backward(ad.mean(out))
    assert logits.grad is not None
    assert np.any(logits.grad != 0)


def test_gumbel_rejects_nonpositive_temperature():
    with pytest.raises(ValueError):
        ad.gumbel_softmax_with_noise(t64([[0.0]]), np.zeros((1, 1)), tau=0.0)


@settings(max_examples=40, deadline=None)
@given(rows=st.integers(1, 5), cols=st.integers(2, 5), seed=st.integers(0, 2**31))
def test_gumbel_soft_rows_are_distributions(rows, cols, seed):
    rng = np.random.default_rng(seed)
    logits = t64(rng.standard_normal((rows, cols)) * 3)
    out = ad.gumbel_softmax(logits, tau=0.2, rng=rng)
    assert np.all(out.data >= 0)
    assert_allclose(out.data.sum(axis=1), np.ones(rows), atol=1e-6)


def test_seeded_gumbel_draws_are_reproducible():
    a = ad.sample_gumbel((3, 4), np.random.default_rng(9), dtype=np.float64)
    b = ad.sample_gumbel((3, 4), np.random.default_rng(9), dtype=np.float64)
    assert_array_equal(a, b)


# ---------------------------------------------------------------------------
# analytic input gradient (double-backprop path)


def _random_critic(rng, d, dtype=np.float64):
    def layer(fi, fo):
        bound = np.sqrt(1.0 / fi)
        return (ad.Tensor(rng.uniform(-bound, bound, (fi, fo)).astype(dtype)),
                ad.Tensor(rng.uniform(-bound, bound, fo).astype(dtype)))
    w1, b1 = layer(d, d)
    w2, b2 = layer(d, d)
    w3, b3 = layer(d, 1)
    return [(w1, b1, 0.01), (w2, b2, 0.01)], w3, b3


def _critic_value(hidden, out_w, out_b, x):
    a = x
    for w, b, slope in hidden:
        z = a @ w.data + b.data
        a = np.where(z > 0, z, slope * z)
    return a @ out_w.data + out_b.data


def test_linear_critic_input_gradient_is_weight_vector():
    d = 3
    w = np.array([[0.5], [-1.0], [2.0]])
    hidden = [(ad.Tensor(np.eye(d)), ad.Tensor(np.zeros(d)), 0.01)]
    x = np.array([[1.0, 2.0, 3.0], [0.5, 0.25, 4.0]])  # positive keeps masks at 1
    g = ad.input_gradient_mlp(hidden, ad.Tensor(w), x)
    assert_allclose(g.data, np.tile(w.T, (2, 1)))


def test_unit_norm_gradient_gives_zero_penalty():
    d = 4
    w = np.zeros((d, 1))
    w[0, 0] = 1.0
    hidden = [(ad.Tensor(np.eye(d)), ad.Tensor(np.ones(d)), 0.01)]
    x = np.abs(np.random.default_rng(3).standard_normal((5, d))) + 0.1
    g = ad.input_gradient_mlp(hidden, ad.Tensor(w), x)
    penalty = ad.mean(ad.square(ad.row_norms(g) - 1.0))
    assert_allclose(penalty.data, 0.0, atol=1e-12)


def test_input_gradient_matches_direct_critic_gradient():
    rng = np.random.default_rng(11)
    d = 5
    hidden, w3, b3 = _random_critic(rng, d)
    x = rng.standard_normal((7, d))
    g = ad.input_gradient_mlp(hidden, w3, x)
    fd = np.zeros_like(x)
    h = 1e-6
    for i in range(x.shape[0]):
        for j in range(d):
            xp = x.copy()
            xp[i, j] += h
            xm = x.copy()
            xm[i, j] -= h
            fd[i, j] = (_critic_value(hidden, w3, b3, xp)[i, 0]
                        - _critic_value(hidden, w3, b3, xm)[i, 0]) / (2 * h)
    assert relative_gap(g.data, fd) < 1e-6


def test_penalty_gradient_matches_finite_difference_double_backprop():
    rng = np.random.default_rng(21)
    d = 4
    hidden, w3, _ = _random_critic(rng, d)
    x = rng.standard_normal((6, d))
    leaves = [hidden[0][0], hidden[1][0], w3]

    def penalty_value():
        masks = []
        a = x
        for w, b, slope in hidden:
            z = a @ w.data + b.data
            masks.append(np.where(z > 0, 1.0, slope))
            a = np.where(z > 0, z, slope * z)
        cur = masks[1] * w3.data.T
        cur = (cur @ hidden[1][0].data.T) * masks[0]
        grad = cur @ hidden[0][0].data.T
        norms = np.sqrt((grad ** 2).sum(axis=1))
        return float(((norms - 1.0) ** 2).mean())

    node = ad.input_gradient_mlp(hidden, w3, x)
    ad.backward(ad.mean(ad.square(ad.row_norms(node) - 1.0)))
    fd = central_difference(penalty_value, [p.data for p in leaves])
    for leaf, ref in zip(leaves, fd):
        assert relative_gap(leaf.grad, ref) < 1e-5


# ---------------------------------------------------------------------------
# Adam


def test_adam_zero_gradient_keeps_parameters():
    p = t64(np.ones(3))
    opt = ad.Adam([p], lr=0.1)
    p.grad = np.zeros(3)
    opt.step()
    assert_array_equal(p.data, np.ones(3))


def test_adam_first_step_closed_form():
    g = np.array([0.3, -2.0, 0.0])
    p = t64(np.zeros(3))
    opt = ad.Adam([p], lr=0.01)
    p.grad = g.copy()
    opt.step()
    expected = -0.01 * g / (np.abs(g) + 1e-8)
    assert_allclose(p.data, expected, rtol=1e-12)


def test_adam_constant_gradient_approaches_sign_step():
    g = np.array([0.5, -0.01])
    p = t64(np.zeros(2))
    opt = ad.Adam([p], lr=0.001)
    prev = p.data.copy()
    for _ in range(500):
        prev = p.data.copy()
        p.grad = g.copy()
        opt.step()
    assert_allclose(p.data - prev, -0.001 * np.sign(g), rtol=1e-4)


def test_adam_rejects_shape_mismatch():
    p = t64(np.zeros(3))
    opt = ad.Adam([p], lr=0.1)
    p.grad = np.zeros(4)
    with pytest.raises(ValueError):
        opt.step()
