"""A small reverse-mode autodiff engine over 2-D float64 arrays.

Every op returns a new :class:`Tensor` that remembers its parents and a
closure propagating the output gradient back to them. :func:`backward`
replays these closures in reverse topological order and then frees the
graph, so calling it twice on the same loss is an error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


class ShapeError(ValueError):
    pass


class Tensor:
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, parents=(), op=""):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim == 0:
            data = data.reshape(1, 1)
        if data.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got shape {data.shape}")
        self.data = data
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward = None
        self._op = op
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op or 'leaf'})"

    def item(self):
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)


class Parameter(Tensor):
    """Trainable tensor carrying Adam moments and its own step counter."""

    def __init__(self, data, name=""):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.m = np.zeros_like(self.data)
        self.v = np.zeros_like(self.data)
        self.step = 0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, op, backward):
    out = Tensor(data, parents=parents, op=op)
    if out.requires_grad:
        out._backward = backward
    else:
        out._parents = ()
    return out


def _accumulate(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _check_broadcast(a, b, op):
    (n, m), (p, q) = a.shape, b.shape
    if not ((n == p or p == 1 or n == 1) and (m == q or q == 1 or m == 1)):
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _unbroadcast(g, shape):
    if g.shape[0] != shape[0]:
        g = g.sum(axis=0, keepdims=True)
    if g.shape[1] != shape[1]:
        g = g.sum(axis=1, keepdims=True)
    return g


def add(a, b):
    """Elementwise sum; a ``(1, m)``, ``(n, 1)`` or ``(1, 1)`` operand broadcasts."""
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _node(a.data + b.data, (a, b), "add", backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, -_unbroadcast(g, b.shape))

    return _node(a.data - b.data, (a, b), "sub", backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _node(a.data * b.data, (a, b), "mul", backward)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def backward(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _node(a.data @ b.data, (a, b), "matmul", backward)


def sigmoid(a):
    a = as_tensor(a)
    x = a.data
    # split by sign so neither branch overflows
    e = np.exp(-np.abs(x))
    s = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))

    def backward(g):
        _accumulate(a, g * s * (1.0 - s))

    return _node(s, (a,), "sigmoid", backward)


def tanh(a):
    a = as_tensor(a)
    t = np.tanh(a.data)

    def backward(g):
        _accumulate(a, g * (1.0 - t * t))

    return _node(t, (a,), "tanh", backward)


def relu(a):
    a = as_tensor(a)
    pos = a.data > 0

    def backward(g):
        _accumulate(a, g * pos)

    return _node(np.where(pos, a.data, 0.0), (a,), "relu", backward)


def power(a, p):
    """Elementwise ``a ** p`` for a constant exponent."""
    a = as_tensor(a)
    out = a.data ** p

    def backward(g):
        _accumulate(a, g * p * a.data ** (p - 1))

    return _node(out, (a,), "power", backward)


def total(a):
    """Sum of all entries as a ``(1, 1)`` tensor."""
    a = as_tensor(a)

    def backward(g):
        _accumulate(a, np.full(a.shape, g[0, 0]))

    return _node(a.data.sum().reshape(1, 1), (a,), "sum", backward)


def concat_cols(tensors):
    tensors = [as_tensor(t) for t in tensors]
    rows = {t.shape[0] for t in tensors}
    if len(rows) != 1:
        raise ShapeError(f"concat_cols: row counts differ: {[t.shape for t in tensors]}")
    widths = np.cumsum([0] + [t.shape[1] for t in tensors])

    def backward(g):
        for t, lo, hi in zip(tensors, widths[:-1], widths[1:]):
            _accumulate(t, g[:, lo:hi])

    return _node(np.hstack([t.data for t in tensors]), tuple(tensors), "concat", backward)


def slice_cols(a, start, stop):
    a = as_tensor(a)
    if not 0 <= start < stop <= a.shape[1]:
        raise ShapeError(f"slice_cols: [{start}:{stop}] out of range for shape {a.shape}")

    def backward(g):
        full = np.zeros_like(a.data)
        full[:, start:stop] = g
        _accumulate(a, full)

    return _node(a.data[:, start:stop], (a,), "slice", backward)


def gather_rows(a, index):
    """Rows ``a[index]``; repeated indices accumulate on the way back."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.int64)

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        _accumulate(a, full)

    return _node(a.data[index], (a,), "gather", backward)


def segment_sum(a, segments, n):
    """Sum rows of ``a`` into ``n`` buckets given by ``segments``."""
    a = as_tensor(a)
    segments = np.asarray(segments, dtype=np.int64)
    if len(segments) != a.shape[0]:
        raise ShapeError(f"segment_sum: {len(segments)} segment ids for {a.shape[0]} rows")
    out = np.zeros((n, a.shape[1]))
    np.add.at(out, segments, a.data)

    def backward(g):
        _accumulate(a, g[segments])

    return _node(out, (a,), "segment_sum", backward)


@dataclass(frozen=True)
class SparsePattern:
    """Fixed sparsity structure ``(rows[k], cols[k])`` of an ``n_rows x n_cols`` matrix.

    Entries are kept in CSR order so a value vector maps straight onto a
    ``scipy.sparse.csr_matrix`` without re-sorting.
    """

    rows: np.ndarray
    cols: np.ndarray
    n_rows: int
    n_cols: int

    @classmethod
    def from_coo(cls, rows, cols, n_rows, n_cols):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        order = np.lexsort((cols, rows))
        return cls(rows[order], cols[order], n_rows, n_cols), order

    @property
    def nnz(self):
        return len(self.rows)

    @property
    def indptr(self):
        return np.r_[0, np.cumsum(np.bincount(self.rows, minlength=self.n_rows))]

    def matrix(self, values):
        return sp.csr_matrix((np.asarray(values).reshape(-1), self.cols, self.indptr),
                             shape=(self.n_rows, self.n_cols))


def spmm(values, pattern, h):
    """Sparse-dense product ``S @ h`` where ``S`` has a fixed pattern and differentiable values.

    ``values`` is an ``(nnz, 1)`` tensor in the pattern's entry order.
    """
    values, h = as_tensor(values), as_tensor(h)
    if values.shape != (pattern.nnz, 1):
        raise ShapeError(f"spmm: values shape {values.shape} != ({pattern.nnz}, 1)")
    if h.shape[0] != pattern.n_cols:
        raise ShapeError(f"spmm: sparse ({pattern.n_rows}, {pattern.n_cols}) @ dense {h.shape}")
    S = pattern.matrix(values.data)

    def backward(g):
        if values.requires_grad:
            _accumulate(values, np.einsum("ij,ij->i", g[pattern.rows], h.data[pattern.cols])[:, None])
        if h.requires_grad:
            _accumulate(h, S.T @ g)

    return _node(S @ h.data, (values, h), "spmm", backward)


def dropout(a, p, rng, training=True):
    """Inverted dropout: zero entries with probability ``p`` and rescale survivors."""
    a = as_tensor(a)
    if not training or p == 0:
        return a
    if not 0 <= p < 1:
        raise ValueError(f"dropout rate must lie in [0, 1), got {p}")
    mask = (rng.random(a.shape) >= p) / (1.0 - p)

    def backward(g):
        _accumulate(a, g * mask)

    return _node(a.data * mask, (a,), "dropout", backward)


def log_softmax(x):
    x = x - x.max(axis=1, keepdims=True)
    return x - np.log(np.exp(x).sum(axis=1, keepdims=True))


def softmax_cross_entropy(logits, labels, mask=None):
    """Mean negative log-likelihood over the rows selected by ``mask``."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    n = logits.shape[0]
    if len(labels) != n:
        raise ShapeError(f"cross entropy: {len(labels)} labels for {n} rows")
    if mask is None:
        rows = np.arange(n)
    else:
        mask = np.asarray(mask)
        rows = np.flatnonzero(mask) if mask.dtype == bool else mask.astype(np.int64)
    if len(rows) == 0:
        raise ValueError("cross entropy over an empty mask")
    logp = log_softmax(logits.data[rows])
    y = labels[rows]
    loss = -logp[np.arange(len(rows)), y].mean()

    def backward(g):
        p = np.exp(logp)
        p[np.arange(len(rows)), y] -= 1.0
        full = np.zeros_like(logits.data)
        full[rows] = p * (g[0, 0] / len(rows))
        _accumulate(logits, full)

    return _node(np.array([[loss]]), (logits,), "xent", backward)


def _topological(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss):
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf that requires it."""
    if loss.shape != (1, 1):
        raise ShapeError(f"backward needs a scalar (1, 1) loss, got {loss.shape}")
    if loss._consumed:
        raise RuntimeError("backward already ran on this graph; rebuild it with a new forward pass")
    if not loss.requires_grad:
        raise RuntimeError("loss does not depend on any parameter")
    order = _topological(loss)
    for node in order:
        if node._backward is not None:
            node.grad = None
    loss.grad = np.ones((1, 1))
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    for node in order:
        if node._backward is not None:
            node._backward = None
            node._parents = ()
            node._consumed = True


def zero_grad(params):
    for p in params:
        p.grad = None


def adam_step(params, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
    """One Adam update with decoupled weight decay, applied in place."""
    for p in params:
        g = np.zeros_like(p.data) if p.grad is None else p.grad
        p.step += 1
        if weight_decay:
            p.data *= 1.0 - lr * weight_decay
        p.m = beta1 * p.m + (1.0 - beta1) * g
        p.v = beta2 * p.v + (1.0 - beta2) * g * g
        m_hat = p.m / (1.0 - beta1 ** p.step)
        v_hat = p.v / (1.0 - beta2 ** p.step)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)


def glorot(rng, fan_in, fan_out, shape=None):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))
