import zlib

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gegcn import autograd as ag
from gegcn.autograd import Parameter, SparsePattern, Tensor

H = 1e-6
RTOL = 1e-5


def fd_check(fn, inputs, rng, atol=1e-8):
    """Central differences of ``sum(R * fn(*inputs))`` against backprop, per input entry."""
    params = [Parameter(x.copy()) for x in inputs]
    out = fn(*params)
    R = rng.standard_normal(out.shape)
    ag.backward(ag.total(out * R))
    for p, x in zip(params, inputs):
        num = np.zeros_like(x)
        for idx in np.ndindex(x.shape):
            plus, minus = [v.copy() for v in inputs], [v.copy() for v in inputs]
            k = next(i for i, v in enumerate(inputs) if v is x)
            plus[k][idx] += H
            minus[k][idx] -= H
            fp = (fn(*[Tensor(v) for v in plus]).data * R).sum()
            fm = (fn(*[Tensor(v) for v in minus]).data * R).sum()
            num[idx] = (fp - fm) / (2 * H)
        ana = np.zeros_like(x) if p.grad is None else p.grad
        assert np.allclose(ana, num, rtol=RTOL, atol=atol), (ana, num)


def away_from_zero(rng, shape, gap=0.05):
    x = rng.standard_normal(shape)
    return np.where(np.abs(x) < gap, gap * np.sign(x + 1e-300) + x, x)


PATTERN_ROWS = np.array([0, 0, 1, 2, 2, 3])
PATTERN_COLS = np.array([1, 3, 1, 0, 2, 3])
PATTERN, _ = SparsePattern.from_coo(PATTERN_ROWS, PATTERN_COLS, 4, 4)

PRIMITIVES = {
    "add": (lambda a, b: a + b, [(3, 4), (3, 4)]),
    "add_row": (lambda a, b: a + b, [(3, 4), (1, 4)]),
    "add_col": (lambda a, b: a + b, [(3, 4), (3, 1)]),
    "sub_row": (lambda a, b: a - b, [(3, 4), (1, 4)]),
    "mul": (lambda a, b: a * b, [(3, 4), (3, 4)]),
    "mul_col": (lambda a, b: a * b, [(3, 4), (3, 1)]),
    "matmul": (lambda a, b: a @ b, [(3, 4), (4, 2)]),
    "sigmoid": (ag.sigmoid, [(3, 4)]),
    "tanh": (ag.tanh, [(3, 4)]),
    "relu": (ag.relu, [(3, 4)]),
    "total": (ag.total, [(3, 4)]),
    "concat": (lambda a, b: ag.concat_cols([a, b]), [(3, 2), (3, 3)]),
    "slice": (lambda a: ag.slice_cols(a, 1, 3), [(3, 4)]),
    "gather": (lambda a: ag.gather_rows(a, [2, 0, 2, 1]), [(3, 2)]),
    "segment_sum": (lambda a: ag.segment_sum(a, [0, 2, 2, 1, 0], 3), [(5, 2)]),
    "spmm": (lambda v, h: ag.spmm(v, PATTERN, h), [(6, 1), (4, 3)]),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_finite_differences(name):
    fn, shapes = PRIMITIVES[name]
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    for _ in range(100):
        fd_check(fn, [away_from_zero(rng, s) for s in shapes], rng)


def test_power_finite_differences():
    rng = np.random.default_rng(0)
    for _ in range(100):
        x = rng.uniform(0.2, 3.0, (3, 2))
        fd_check(lambda a: ag.power(a, -0.5), [x], rng)


def test_dropout_finite_differences():
    rng = np.random.default_rng(1)
    for trial in range(100):
        x = rng.standard_normal((4, 3))

        def fn(a, trial=trial):
            return ag.dropout(a, 0.4, np.random.default_rng(trial), training=True)

        fd_check(fn, [x], rng)


def test_cross_entropy_finite_differences():
    rng = np.random.default_rng(2)
    for _ in range(100):
        logits = rng.standard_normal((6, 3))
        labels = rng.integers(0, 3, 6)
        mask = np.array([True, False, True, True, False, True])
        fd_check(lambda z: ag.softmax_cross_entropy(z, labels, mask), [logits], rng)


def test_identity_matmul():
    X = Parameter(np.arange(6.0).reshape(2, 3))
    out = Tensor(np.eye(2)) @ X
    assert np.array_equal(out.data, X.data)
    ag.backward(ag.total(out))
    assert np.array_equal(X.grad, np.ones((2, 3)))


def test_sigmoid_at_zero():
    x = Parameter(np.zeros((1, 1)))
    y = ag.sigmoid(x)
    ag.backward(y)
    assert y.item() == 0.5 and x.grad[0, 0] == 0.25


def test_sigmoid_extremes_finite():
    y = ag.sigmoid(Tensor(np.array([[-800.0, 800.0]])))
    assert y.data.tolist() == [[0.0, 1.0]]


def test_square_and_fanout():
    x = Parameter(np.array([[3.0]]))
    ag.backward(x * x)
    assert x.grad[0, 0] == 6.0
    x = Parameter(np.array([[1.5]]))
    ag.backward(x + x)
    assert x.grad[0, 0] == 2.0


def test_backward_twice_raises():
    x = Parameter(np.ones((1, 1)))
    loss = ag.sigmoid(x)
    ag.backward(loss)
    with pytest.raises(RuntimeError):
        ag.backward(loss)


def test_cross_entropy_limit_and_shift_invariance():
    big = ag.softmax_cross_entropy(np.array([[50.0, -50.0]]), [0])
    assert big.item() < 1e-40
    rng = np.random.default_rng(4)
    z = rng.standard_normal((5, 4))
    y = rng.integers(0, 4, 5)
    shifted = z + rng.standard_normal((5, 1)) * 10
    a = ag.softmax_cross_entropy(z, y).item()
    b = ag.softmax_cross_entropy(shifted, y).item()
    assert abs(a - b) < 1e-12


def test_cross_entropy_empty_mask():
    with pytest.raises(ValueError):
        ag.softmax_cross_entropy(np.zeros((2, 2)), [0, 1], np.zeros(2, dtype=bool))


def test_shape_errors():
    with pytest.raises(ag.ShapeError):
        Tensor(np.zeros((2, 3))) @ Tensor(np.zeros((2, 3)))
    with pytest.raises(ag.ShapeError):
        Tensor(np.zeros((2, 3))) + Tensor(np.zeros((3, 2)))
    with pytest.raises(ag.ShapeError):
        Tensor(np.zeros(3))


def test_dropout_identity_and_rescale():
    rng = np.random.default_rng(0)
    x = Tensor(np.ones((200, 50)))
    assert ag.dropout(x, 0.0, rng).data is x.data
    assert ag.dropout(x, 0.5, rng, training=False) is x
    y = ag.dropout(x, 0.25, rng).data
    assert set(np.unique(y)) <= {0.0, 1.0 / 0.75}
    assert abs(y.mean() - 1.0) < 0.02


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 0.9), st.integers(0, 1000))
def test_dropout_expectation(p, seed):
    x = Tensor(np.ones((100, 100)))
    y = ag.dropout(x, p, np.random.default_rng(seed)).data
    assert abs(y.mean() - 1.0) < 6 * np.sqrt(p / (1 - p) / 1e4) + 1e-12


def test_adam_examples():
    p = Parameter(np.array([[1.0, -2.0]]))
    p.grad = np.zeros((1, 2))
    ag.adam_step([p], lr=0.1)
    assert np.array_equal(p.data, [[1.0, -2.0]])

    p = Parameter(np.array([[0.0]]))
    p.grad = np.ones((1, 1))
    ag.adam_step([p], lr=0.1)
    assert abs(p.data[0, 0] + 0.1) < 1e-6

    p = Parameter(np.array([[2.0]]))
    ag.adam_step([p], lr=0.1, weight_decay=0.5)
    assert abs(p.data[0, 0] - 2.0 * (1 - 0.05)) < 1e-15
    assert p.step == 1


def test_spmm_matches_dense():
    rng = np.random.default_rng(3)
    v = rng.standard_normal((6, 1))
    h = rng.standard_normal((4, 2))
    dense = PATTERN.matrix(v).toarray()
    assert np.allclose(ag.spmm(Tensor(v), PATTERN, Tensor(h)).data, dense @ h)


def test_glorot_bounds():
    w = ag.glorot(np.random.default_rng(0), 30, 20)
    assert w.shape == (30, 20) and np.abs(w).max() <= np.sqrt(6 / 50)
