import numpy as np
import pytest

from shotpose import autodiff as ad
from shotpose.errors import ContractError, ShapeMismatchError

from oracles import central_difference, max_relative_error


def test_matmul_identity():
    eye = ad.Tensor(np.eye(2))
    m = ad.Tensor([[1.0, 2.0], [3.0, 4.0]])
    out = ad.matmul(eye, m)
    np.testing.assert_array_equal(out.data, [[1.0, 2.0], [3.0, 4.0]])


def test_matmul_hand_arithmetic():
    a = ad.Tensor([[1.0, 2.0]])
    b = ad.Tensor([[3.0], [4.0]])
    out = ad.matmul(a, b)
    np.testing.assert_array_equal(out.data, [[11.0]])


def test_matmul_shape_error_names_both_shapes():
    a = ad.Tensor(np.zeros((2, 3)))
    b = ad.Tensor(np.zeros((2, 3)))
    with pytest.raises(ShapeMismatchError) as exc:
        ad.matmul(a, b)
    assert "(2, 3)" in str(exc.value)


def test_matmul_gradient_matches_finite_differences():
    rng = np.random.default_rng(11)
    a0 = rng.normal(size=(3, 4))
    b = ad.Tensor(rng.normal(size=(4, 2)))

    def f(x):
        return float(np.sum(x @ b.data))

    a = ad.Tensor(a0.copy(), requires_grad=True)
    loss = ad.sum_all(ad.matmul(a, b))
    ad.backward(loss)

    numeric = central_difference(f, a0.copy())
    assert max_relative_error(a.grad, numeric) < 1e-6
    # The analytic gradient is the row-broadcast of B's column sums.
    expected = np.tile(b.data.sum(axis=1), (3, 1))
    np.testing.assert_allclose(a.grad, expected, rtol=1e-12)


def test_relu_values_and_tie_at_zero():
    x = ad.Tensor([-1.0, 0.0, 2.0], requires_grad=True)
    out = ad.relu(x)
    np.testing.assert_array_equal(out.data, [0.0, 0.0, 2.0])
    loss = ad.sum_all(out)
    ad.backward(loss)
    # Gradient at exactly 0 propagates zero.
    np.testing.assert_array_equal(x.grad, [0.0, 0.0, 1.0])


def test_sigmoid_at_zero():
    assert ad.sigmoid(ad.Tensor(0.0)).item() == 0.5


@pytest.mark.parametrize("op", [ad.relu, ad.sigmoid, ad.tanh])
def test_unary_ops_finite_on_extreme_inputs(op):
    x = ad.Tensor([-1000.0, -1.0, 0.0, 1.0, 1000.0])
    assert np.all(np.isfinite(op(x).data))


def test_tanh_gradient_matches_finite_differences():
    x = ad.Tensor(np.array(0.3), requires_grad=True)
    ad.backward(ad.tanh(x))
    numeric = central_difference(lambda v: float(np.tanh(v)), np.array(0.3))
    assert max_relative_error(x.grad, numeric) < 1e-6


@pytest.mark.parametrize("op,ref", [
    (ad.add, np.add),
    (ad.sub, np.subtract),
    (ad.mul, np.multiply),
])
def test_binary_elementwise_gradients(op, ref):
    rng = np.random.default_rng(5)
    a0 = rng.normal(size=(3, 3))
    b0 = rng.normal(size=(3, 3))
    a = ad.Tensor(a0.copy(), requires_grad=True)
    b = ad.Tensor(b0.copy(), requires_grad=True)
    ad.backward(ad.sum_all(op(a, b)))
    na = central_difference(lambda x: float(np.sum(ref(x, b0))), a0.copy())
    nb = central_difference(lambda x: float(np.sum(ref(a0, x))), b0.copy())
    assert max_relative_error(a.grad, na) < 1e-4
    assert max_relative_error(b.grad, nb) < 1e-4


def test_elementwise_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        ad.add(ad.Tensor(np.zeros((2, 3))), ad.Tensor(np.zeros((4, 5))))


def test_scalar_broadcast():
    x = ad.Tensor(np.ones((2, 2)), requires_grad=True)
    out = ad.mul(x, 3.0)
    ad.backward(ad.sum_all(out))
    np.testing.assert_array_equal(out.data, np.full((2, 2), 3.0))
    np.testing.assert_array_equal(x.grad, np.full((2, 2), 3.0))


def test_mse_trivial_cases():
    p = ad.Tensor([1.0, 2.0])
    assert ad.mse_loss(p, ad.Tensor([1.0, 2.0])).item() == 0.0
    assert ad.mse_loss(ad.Tensor([0.0, 0.0]), ad.Tensor([1.0, 1.0])).item() == 1.0


def test_mse_matches_direct_recomputation():
    rng = np.random.default_rng(7)
    p = rng.normal(size=(3, 4))
    t = rng.normal(size=(3, 4))
    got = ad.mse_loss(ad.Tensor(p), ad.Tensor(t)).item()
    expected = float(np.mean((p - t) ** 2))
    assert got == expected


def test_mse_shape_mismatch_and_target_grad_rejected():
    with pytest.raises(ShapeMismatchError):
        ad.mse_loss(ad.Tensor(np.zeros(3)), ad.Tensor(np.zeros(4)))
    with pytest.raises(ContractError):
        ad.mse_loss(ad.Tensor(np.zeros(3)), ad.Tensor(np.zeros(3), requires_grad=True))


def test_backward_of_plain_sum_gives_ones():
    p = ad.Tensor(np.random.default_rng(0).normal(size=(4, 5)), requires_grad=True)
    ad.backward(ad.sum_all(p))
    np.testing.assert_array_equal(p.grad, np.ones((4, 5)))


def test_backward_linear_model_matches_finite_differences():
    rng = np.random.default_rng(3)
    w0 = rng.normal(size=(2, 2))
    x = rng.normal(size=(2, 1))
    y = rng.normal(size=(2, 1))

    w = ad.Tensor(w0.copy(), requires_grad=True)
    loss = ad.mse_loss(ad.matmul(w, ad.Tensor(x)), ad.Tensor(y))
    ad.backward(loss)

    numeric = central_difference(
        lambda v: float(np.mean((v @ x - y) ** 2)), w0.copy(), h=1e-5)
    assert max_relative_error(w.grad, numeric) < 1e-4


def test_repeated_backward_with_zeroing_is_identical():
    rng = np.random.default_rng(9)
    w = ad.Tensor(rng.normal(size=(3, 3)), requires_grad=True)
    x = ad.Tensor(rng.normal(size=(3, 1)))
    y = ad.Tensor(rng.normal(size=(3, 1)))

    def run():
        loss = ad.mse_loss(ad.relu(ad.matmul(w, x)), y)
        ad.backward(loss)
        g = w.grad.copy()
        w.zero_grad()
        return g

    first, second = run(), run()
    np.testing.assert_array_equal(first, second)


def test_backward_rejects_non_scalar_loss():
    p = ad.Tensor(np.zeros(3), requires_grad=True)
    with pytest.raises(ContractError):
        ad.backward(ad.add(p, 1.0))


def test_tape_is_topologically_ordered_and_unique():
    a = ad.Tensor(np.ones((2, 2)), requires_grad=True)
    b = ad.mul(a, 2.0)
    c = ad.add(b, a)  # diamond: a feeds both b and c
    loss = ad.sum_all(c)
    tape = ad.build_tape(loss)
    positions = {id(n): i for i, n in enumerate(tape.nodes)}
    assert len(positions) == len(tape.nodes)  # each node exactly once
    for node in tape.nodes:
        for parent in node._parents:
            if parent.requires_grad:
                assert positions[id(parent)] < positions[id(node)]


def test_slicing_and_concat_gradients():
    rng = np.random.default_rng(21)
    x0 = rng.normal(size=(6, 2))
    x = ad.Tensor(x0.copy(), requires_grad=True)
    top = ad.rows(x, 0, 3)
    bottom = ad.rows(x, 3, 6)
    joined = ad.concat_cols([top, bottom])
    first = ad.col(joined, 0)
    loss = ad.sum_all(ad.mul(first, first))
    ad.backward(loss)

    def f(v):
        j = np.concatenate([v[0:3], v[3:6]], axis=1)
        return float(np.sum(j[:, 0:1] ** 2))

    numeric = central_difference(f, x0.copy())
    assert max_relative_error(x.grad, numeric) < 1e-4


def test_reshape_roundtrip_gradient():
    x = ad.Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    flat = ad.reshape(x, (6, 1))
    ad.backward(ad.sum_all(ad.mul(flat, flat)))
    np.testing.assert_allclose(x.grad, 2.0 * x.data)


def test_non_finite_leaf_rejected():
    with pytest.raises(ContractError):
        ad.Tensor([1.0, np.inf])


def test_forward_backward_deterministic_across_runs():
    def run():
        rng = np.random.default_rng(1234)
        w = ad.Tensor(rng.normal(size=(4, 4)), requires_grad=True)
        x = ad.Tensor(rng.normal(size=(4, 1)))
        loss = ad.mse_loss(ad.tanh(ad.matmul(w, x)), ad.Tensor(np.zeros((4, 1))))
        ad.backward(loss)
        return loss.item(), w.grad.copy()

    l1, g1 = run()
    l2, g2 = run()
    assert l1 == l2
    np.testing.assert_array_equal(g1, g2)
