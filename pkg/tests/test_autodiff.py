import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hstqgcn import autodiff as ad
from hstqgcn.autodiff import Adam, ContractError, ShapeError, Tensor
from hstqgcn.gradcheck import check_fn, classical_components, rel_error

finite = st.floats(-20, 20, allow_nan=False)


def test_matmul_examples():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal((Tensor(np.eye(2)) @ Tensor(m)).data, m)
    np.testing.assert_array_equal((Tensor([[1.0, 2.0]]) @ Tensor([[3.0], [4.0]])).data, [[11.0]])
    np.testing.assert_array_equal((Tensor(np.zeros((2, 2))) @ Tensor(m)).data, 0.0)
    with pytest.raises(ShapeError):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))


def test_relu_examples():
    np.testing.assert_array_equal(ad.relu(Tensor([-1.0, 0.0, 2.0])).data, [0.0, 0.0, 2.0])
    x = Tensor([3.0, 0.0, -2.0], requires_grad=True)
    (g,) = ad.backward(ad.sum(ad.relu(x)), [x])
    np.testing.assert_array_equal(g, [1.0, 0.0, 0.0])  # relu'(0) = 0


def test_softmax_examples():
    np.testing.assert_allclose(ad.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5], atol=1e-15)
    np.testing.assert_allclose(ad.softmax(Tensor([1000.0, 1000.0])).data, [0.5, 0.5], atol=1e-15)
    np.testing.assert_allclose(ad.softmax(Tensor([0.0, math.log(3.0)])).data, [0.25, 0.75], atol=1e-15)


@given(arrays(np.float64, (3, 5), elements=finite), st.floats(-100, 100))
def test_softmax_normalized_and_shift_invariant(x, c):
    p = ad.softmax(Tensor(x), axis=1).data
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(ad.softmax(Tensor(x + c), axis=1).data, p, atol=1e-12)


def test_cross_entropy_examples():
    assert ad.cross_entropy(Tensor(np.zeros((1, 4))), [2]).item() == pytest.approx(math.log(4), abs=1e-12)
    logits = np.zeros((1, 3))
    logits[0, 1] = 50.0
    assert ad.cross_entropy(Tensor(logits), [1]).item() < 1e-9
    row = np.array([[0.3, -1.0, 2.0]])
    one = ad.cross_entropy(Tensor(row), [0]).item()
    two = ad.cross_entropy(Tensor(np.vstack([row, row])), [0, 0]).item()
    assert one == pytest.approx(two, abs=1e-15)
    with pytest.raises(IndexError):
        ad.cross_entropy(Tensor(row), [3])


def test_backward_linear_and_dead_unit():
    x = np.array([[1.0], [2.0], [3.0]])
    W = Tensor(np.ones((2, 3)), requires_grad=True)
    (g,) = ad.backward(ad.sum(W @ Tensor(x)), [W])
    np.testing.assert_array_equal(g, np.broadcast_to(x.T, (2, 3)))
    v = Tensor([-5.0], requires_grad=True)
    (g,) = ad.backward(ad.sum(ad.relu(v)), [v])
    np.testing.assert_array_equal(g, [0.0])


def test_backward_contract():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ContractError):
        ad.backward(ad.relu(x))
    unused = Tensor(np.ones(2), requires_grad=True)
    gx, gu = ad.backward(ad.sum(x), [x, unused])
    np.testing.assert_array_equal(gu, [0.0, 0.0])


def test_random_three_layer_composition_fd(rng):
    W1, W2, W3 = rng.normal(size=(4, 5)), rng.normal(size=(5, 3)), rng.normal(size=(3, 2))
    x = rng.normal(size=(6, 4))

    def f(a, b, c):
        return ad.sum(ad.tanh(ad.tanh(Tensor(x) @ a) @ b) @ c)

    assert check_fn(f, [W1, W2, W3]) < 1e-4


@pytest.mark.parametrize("name", sorted(classical_components(np.random.default_rng(0))))
def test_component_gradients(name):
    fn, arrays_ = classical_components(np.random.default_rng(5))[name]
    assert check_fn(fn, arrays_) < 1e-4


def test_reuse_accumulates():
    x = Tensor([2.0], requires_grad=True)
    y = x * x + x  # x used three times
    (g,) = ad.backward(ad.sum(y), [x])
    assert g[0] == 5.0


def test_broadcast_gradients_unbroadcast():
    a = Tensor(np.ones((3, 4)), requires_grad=True)
    b = Tensor(np.arange(4.0), requires_grad=True)
    ga, gb = ad.backward(ad.sum(a * b), [a, b])
    np.testing.assert_array_equal(gb, [3.0, 3.0, 3.0, 3.0])
    np.testing.assert_array_equal(ga, np.broadcast_to(np.arange(4.0), (3, 4)))


def test_tensors_are_immutable():
    t = Tensor([1.0, 2.0])
    with pytest.raises(ValueError):
        t.data[0] = 5.0


def test_take_rows_bounds():
    with pytest.raises(IndexError):
        ad.take_rows(Tensor(np.ones((3, 2))), [3])


def test_causal_conv_current_tap_only():
    x = Tensor(np.array([[[1.0, 2.0, 3.0]]]))
    w = Tensor(np.array([[[0.0, 1.0]]]))
    np.testing.assert_array_equal(ad.causal_conv1d(x, w).data, [[[1.0, 2.0, 3.0]]])
    w = Tensor(np.array([[[1.0, 0.0]]]))  # previous tap only
    np.testing.assert_array_equal(ad.causal_conv1d(x, w).data, [[[0.0, 1.0, 2.0]]])


def test_dropout_inverted_and_seeded():
    x = Tensor(np.ones((200, 50)))
    a = ad.dropout(x, 0.25, np.random.default_rng(1), training=True).data
    b = ad.dropout(x, 0.25, np.random.default_rng(1), training=True).data
    np.testing.assert_array_equal(a, b)
    assert set(np.unique(a)) <= {0.0, 1.0 / 0.75}
    assert abs(a.mean() - 1.0) < 0.05
    assert ad.dropout(x, 0.25, None, training=False) is x or np.array_equal(ad.dropout(x, 0.25, None, False).data, x.data)


def test_adam_examples():
    opt = Adam(lr=0.1)
    p = {"w": Tensor(np.array(0.0), requires_grad=True)}
    out = opt.step(p, {"w": np.array(1.0)})
    assert out["w"].item() == pytest.approx(-0.1 / (1 + 1e-8), abs=1e-15)
    opt = Adam(lr=0.1)
    out = opt.step({"w": Tensor(np.array(0.7))}, {"w": np.array(0.0)})
    assert out["w"].item() == 0.7
    # stateful: two steps of lr differ from one step of 2*lr
    o1, o2 = Adam(lr=0.1), Adam(lr=0.2)
    q = {"w": Tensor(np.array(0.0))}
    g = {"w": np.array(0.5)}
    twice = o1.step(o1.step(q, g), {"w": np.array(-0.4)})["w"].item()
    once = o2.step(q, g)["w"].item()
    assert twice != once


def test_adam_matches_hand_evaluation():
    lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
    grads = [0.5, -0.2, 0.1]
    w, m, v = 1.0, 0.0, 0.0
    opt = Adam(lr, b1, b2, eps)
    p = {"w": Tensor(np.array(1.0))}
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w -= lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
        p = opt.step(p, {"w": np.array(g)})
    assert p["w"].item() == pytest.approx(w, abs=1e-15)


def test_rel_error_floor():
    assert rel_error([1.0], [1.0]) == 0.0
    assert rel_error([1e-12], [0.0]) < 1e-6
    assert rel_error([1.0], [1.1]) == pytest.approx(0.1 / 1.1)


def test_ops_deterministic(rng):
    x = rng.normal(size=(4, 4))
    a = ad.softmax(ad.tanh(Tensor(x)) @ Tensor(x)).data
    b = ad.softmax(ad.tanh(Tensor(x)) @ Tensor(x)).data
    assert a.tobytes() == b.tobytes()
