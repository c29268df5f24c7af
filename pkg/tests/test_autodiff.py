import numpy as np
import pytest

from pcabench import autodiff as ad
from pcabench.errors import ContractError, ShapeError

from oracles import central_diff_grad, rel_err

TOL = 1e-4


def analytic_and_numeric(build, arrays, h=1e-5):
    """Backprop gradients and central-difference gradients for each input."""
    tensors = [ad.param(a) for a in arrays]
    loss = build(*tensors)
    ad.backward(loss)
    grads = [t.grad.copy() for t in tensors]
    numeric = []
    for i in range(len(arrays)):
        def f(w, _i=i):
            vals = [ad.constant(arrays[j]) if j != _i else ad.constant(w) for j in range(len(arrays))]
            return float(build(*vals).value)

        numeric.append(central_diff_grad(f, arrays[i].copy(), h))
    return grads, numeric


def check_op(build, arrays):
    grads, numeric = analytic_and_numeric(build, arrays)
    for g, n in zip(grads, numeric):
        assert rel_err(g, n) <= TOL


def test_sum_gradient_all_ones():
    w = ad.param(np.arange(4.0).reshape(2, 2))
    loss = ad.total(w)
    ad.backward(loss)
    assert np.array_equal(w.grad, np.ones((2, 2)))


def test_squared_norm_gradient_2w():
    vals = np.array([[1.0, -2.0], [0.5, 3.0]])
    w = ad.param(vals)
    loss = ad.total(ad.mul(w, w))
    ad.backward(loss)
    assert np.allclose(w.grad, 2 * vals, atol=1e-14)


def test_non_scalar_loss_rejected():
    w = ad.param(np.ones((2, 2)))
    with pytest.raises(ContractError):
        ad.backward(ad.mul(w, w))


def test_repeated_backward_resets_then_accumulates():
    w = ad.param(np.array([[2.0]]))
    loss = ad.total(ad.mul(w, w))
    ad.backward(loss)
    first = w.grad.copy()
    ad.backward(loss)
    assert np.array_equal(w.grad, first)


def test_grad_shared_node_accumulates_within_one_pass():
    w = ad.param(np.array([3.0]))
    # loss = w*w + w -> dL/dw = 2w + 1
    loss = ad.total(ad.add(ad.mul(w, w), w))
    ad.backward(loss)
    assert np.allclose(w.grad, [7.0])


def test_constant_graph_backward_is_noop():
    c = ad.constant(np.ones((2, 2)))
    loss = ad.total(c)
    ad.backward(loss)
    assert c.grad is None


rng = np.random.default_rng(21)


def test_fd_add_broadcast():
    a = rng.standard_normal((4, 5))
    b = rng.standard_normal((5,))
    w = rng.standard_normal((4, 5))
    check_op(lambda x, y: ad.total(ad.mul(ad.add(x, y), ad.constant(w))), [a, b])


def test_fd_sub():
    a = rng.standard_normal((3, 3))
    b = rng.standard_normal((3, 3))
    w = rng.standard_normal((3, 3))
    check_op(lambda x, y: ad.total(ad.mul(ad.sub(x, y), ad.constant(w))), [a, b])


def test_fd_mul():
    a = rng.standard_normal((4, 4))
    b = rng.standard_normal((4, 4))
    w = rng.standard_normal((4, 4))
    check_op(lambda x, y: ad.total(ad.mul(ad.mul(x, y), ad.constant(w))), [a, b])


def test_fd_scale():
    a = rng.standard_normal((5, 2))
    w = rng.standard_normal((5, 2))
    check_op(lambda x: ad.total(ad.mul(ad.scale(x, -1.7), ad.constant(w))), [a])


def test_fd_matmul_2d():
    a = rng.standard_normal((4, 6))
    b = rng.standard_normal((6, 3))
    w = rng.standard_normal((4, 3))
    check_op(lambda x, y: ad.total(ad.mul(ad.matmul(x, y), ad.constant(w))), [a, b])


def test_fd_matmul_batched():
    a = rng.standard_normal((2, 3, 4))
    b = rng.standard_normal((2, 4, 5))
    w = rng.standard_normal((2, 3, 5))
    check_op(lambda x, y: ad.total(ad.mul(ad.matmul(x, y), ad.constant(w))), [a, b])


def test_fd_matmul_mixed_3d_2d():
    a = rng.standard_normal((2, 3, 4))
    b = rng.standard_normal((4, 5))
    w = rng.standard_normal((2, 3, 5))
    check_op(lambda x, y: ad.total(ad.mul(ad.matmul(x, y), ad.constant(w))), [a, b])


def test_fd_relu():
    a = rng.standard_normal((6, 6))
    a = a + np.sign(a) * 0.1  # keep away from the kink
    w = rng.standard_normal((6, 6))
    check_op(lambda x: ad.total(ad.mul(ad.relu(x), ad.constant(w))), [a])


def test_fd_softmax():
    a = rng.standard_normal((4, 7))
    w = rng.standard_normal((4, 7))
    check_op(lambda x: ad.total(ad.mul(ad.softmax(x), ad.constant(w))), [a])


def test_fd_softmax_masked():
    a = rng.standard_normal((2, 5, 5))
    mask = np.tril(np.ones((5, 5), dtype=bool))
    weights = rng.standard_normal((2, 5, 5))
    check_op(lambda x: ad.total(ad.mul(ad.softmax(x, mask), ad.constant(weights))), [a])


def test_fd_layer_norm():
    x = rng.standard_normal((3, 8))
    gain = rng.standard_normal(8) + 1.0
    bias = rng.standard_normal(8)
    weights = rng.standard_normal((3, 8))
    check_op(lambda a, g, b: ad.total(ad.mul(ad.layer_norm(a, g, b), ad.constant(weights))), [x, gain, bias])


def test_fd_permute_reshape_slice():
    a = rng.standard_normal((2, 4, 6))
    weights = rng.standard_normal((2, 2, 8))

    def build(x):
        y = ad.permute(x, (0, 2, 1))        # (2, 6, 4)
        y = ad.slice_rows(y, 1, 5)          # (2, 4, 4)
        y = ad.reshape(y, (2, 2, 8))
        return ad.total(ad.mul(y, ad.constant(weights)))

    check_op(build, [a])


def test_fd_mse_loss():
    p = rng.standard_normal((5, 3))
    t = rng.standard_normal((5, 3))
    check_op(lambda x: ad.mse_loss(x, t), [p])


def test_fd_attention_block_composite():
    # scaled dot-product attention with causal mask, vs finite differences
    s, d = 5, 4
    q = rng.standard_normal((s, d))
    k = rng.standard_normal((s, d))
    v = rng.standard_normal((s, d))
    target = rng.standard_normal((s, d))
    mask = np.tril(np.ones((s, s), dtype=bool))

    def build(qt, kt, vt):
        scores = ad.scale(ad.matmul(qt, ad.transpose_last(kt)), 1.0 / np.sqrt(d))
        attn = ad.softmax(scores, mask)
        out = ad.matmul(attn, vt)
        return ad.mse_loss(out, target)

    grads, numeric = analytic_and_numeric(build, [q, k, v])
    for g, n in zip(grads, numeric):
        assert rel_err(g, n) <= TOL


def test_slice_rows_bounds_checked():
    a = ad.param(np.zeros((4, 2)))
    with pytest.raises(ShapeError):
        ad.slice_rows(a, 2, 7)


def test_mse_shape_mismatch():
    with pytest.raises(ShapeError):
        ad.mse_loss(ad.param(np.zeros((2, 2))), np.zeros((2, 3)))


def test_deep_chain_no_recursion_trouble():
    x = ad.param(np.ones((2, 2)))
    y = x
    for _ in range(3000):
        y = ad.scale(y, 1.0)
    ad.backward(ad.total(y))
    assert np.array_equal(x.grad, np.ones((2, 2)))
