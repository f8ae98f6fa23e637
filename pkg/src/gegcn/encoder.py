"""LSTM encoding of per-edge (curvature, weight) trajectories into importance scores."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Parameter, SparsePattern

GATES = ("f", "i", "o", "c")


@dataclass
class LstmParams:
    """Shared LSTM and scoring-head weights.

    Gate weights are stored transposed relative to the column-vector
    notation (``W`` is ``2 x d``, ``U`` is ``d x d``, ``b`` is ``1 x d``) so
    a batch of edges is processed as rows.
    """

    W: dict
    U: dict
    b: dict
    W_s: Parameter
    b_s: Parameter
    hidden: int
    node_bias: Parameter | None = None

    @classmethod
    def init(cls, rng, hidden=16, n_nodes=None):
        """Glorot-uniform weights, zero biases except the forget gate at +1."""
        W = {k: Parameter(ag.glorot(rng, 2, hidden), f"W_{k}") for k in GATES}
        U = {k: Parameter(ag.glorot(rng, hidden, hidden), f"U_{k}") for k in GATES}
        b = {k: Parameter(np.full((1, hidden), 1.0 if k == "f" else 0.0), f"b_{k}") for k in GATES}
        W_s = Parameter(ag.glorot(rng, hidden, 1), "W_s")
        b_s = Parameter(np.zeros((1, 1)), "b_s")
        node_bias = None if n_nodes is None else Parameter(np.zeros((n_nodes, 1)), "node_bias")
        return cls(W, U, b, W_s, b_s, hidden, node_bias)

    @classmethod
    def zeros(cls, hidden):
        def z(r, c, name):
            return Parameter(np.zeros((r, c)), name)

        return cls({k: z(2, hidden, f"W_{k}") for k in GATES},
                   {k: z(hidden, hidden, f"U_{k}") for k in GATES},
                   {k: z(1, hidden, f"b_{k}") for k in GATES},
                   z(hidden, 1, "W_s"), z(1, 1, "b_s"), hidden)

    def parameters(self):
        ps = [self.W[k] for k in GATES] + [self.U[k] for k in GATES] + [self.b[k] for k in GATES]
        ps += [self.W_s, self.b_s]
        if self.node_bias is not None:
            ps.append(self.node_bias)
        return ps


def lstm_cell(x, h_prev, c_prev, params):
    """One LSTM step for a batch of rows.

    ``x`` is ``(B, 2)``; ``h_prev`` and ``c_prev`` are ``(B, d)``.
    """
    x, h_prev, c_prev = ag.as_tensor(x), ag.as_tensor(h_prev), ag.as_tensor(c_prev)
    d = params.hidden
    if x.shape[1] != 2 or h_prev.shape[1] != d or c_prev.shape != h_prev.shape:
        raise ag.ShapeError(
            f"lstm_cell: x {x.shape}, h {h_prev.shape}, c {c_prev.shape} for hidden size {d}")

    def pre(k):
        return x @ params.W[k] + h_prev @ params.U[k] + params.b[k]

    f = ag.sigmoid(pre("f"))
    i = ag.sigmoid(pre("i"))
    o = ag.sigmoid(pre("o"))
    c_tilde = ag.tanh(pre("c"))
    c = f * c_prev + i * c_tilde
    h = o * ag.tanh(c)
    return h, c


def encode_edge_sequence(seq, params):
    """Final hidden state after scanning ``seq`` left to right from zero state.

    ``seq`` has shape ``(T + 1, 2)`` for one edge or ``(E, T + 1, 2)`` for a
    batch; the result is ``(1, d)`` or ``(E, d)``.
    """
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim == 2:
        seq = seq[None]
    if seq.ndim != 3 or seq.shape[2] != 2:
        raise ag.ShapeError(f"expected (E, T+1, 2) inputs, got {seq.shape}")
    if seq.shape[1] == 0:
        raise ValueError("cannot encode an empty sequence")
    E = seq.shape[0]
    h = ag.Tensor(np.zeros((E, params.hidden)))
    c = ag.Tensor(np.zeros((E, params.hidden)))
    for t in range(seq.shape[1]):
        h, c = lstm_cell(ag.Tensor(seq[:, t, :]), h, c, params)
    return h


def edge_score(h, params, loop_nodes=None):
    """``sigmoid(h W_s + b_s)``; with per-node bias, loops also add their node's bias.

    ``loop_nodes`` is an int array (node id for self-loop rows, -1 elsewhere),
    only consulted when ``params.node_bias`` is set.
    """
    logit = ag.as_tensor(h) @ params.W_s + params.b_s
    if params.node_bias is not None and loop_nodes is not None:
        loop_nodes = np.asarray(loop_nodes)
        is_loop = (loop_nodes >= 0).astype(float)[:, None]
        bias = ag.gather_rows(params.node_bias, np.maximum(loop_nodes, 0))
        logit = logit + bias * is_loop
    return ag.sigmoid(logit)


@dataclass(frozen=True)
class AdjacencyLayout:
    """Maps the edge list of a self-looped graph onto a symmetric sparse pattern.

    Each non-loop edge contributes entries ``(u, v)`` and ``(v, u)``; a loop
    contributes ``(v, v)``. ``edge_of_entry[k]`` is the edge id behind entry k.
    """

    pattern: SparsePattern
    edge_of_entry: np.ndarray
    n: int

    @classmethod
    def from_graph(cls, g):
        u, v = g.edges[:, 0], g.edges[:, 1]
        ids = np.arange(g.num_edges)
        off = u != v
        rows = np.r_[u, v[off]]
        cols = np.r_[v, u[off]]
        owner = np.r_[ids, ids[off]]
        pattern, order = SparsePattern.from_coo(rows, cols, g.n, g.n)
        return cls(pattern, owner[order], g.n)


@dataclass
class ImportanceMatrix:
    """Symmetric sparse matrix of edge scores; ``values`` follow ``layout.pattern``."""

    layout: AdjacencyLayout
    values: ag.Tensor

    def dense(self):
        return self.layout.pattern.matrix(self.values.data).toarray()


def build_importance_matrix(scores, g, layout=None):
    """Place one score per edge id (self-loops included) into a symmetric matrix.

    ``scores`` is an ``(E, 1)`` tensor or array, a length-E vector, or a
    mapping from ``(u, v)`` pairs to scores.
    """
    layout = layout or AdjacencyLayout.from_graph(g)
    if isinstance(scores, dict):
        vec = np.empty(g.num_edges)
        for e, (u, v) in enumerate(g.edges):
            key = (int(u), int(v))
            if key not in scores and (key[1], key[0]) not in scores:
                raise KeyError(f"no score for edge {key}")
            vec[e] = scores.get(key, scores.get((key[1], key[0])))
        scores = vec
    if not isinstance(scores, ag.Tensor):
        scores = np.asarray(scores, dtype=float).reshape(-1, 1)
        scores = ag.Tensor(scores)
    if scores.shape != (g.num_edges, 1):
        raise ag.ShapeError(f"expected ({g.num_edges}, 1) scores, got {scores.shape}")
    return ImportanceMatrix(layout, ag.gather_rows(scores, layout.edge_of_entry))


def standardize_inputs(x):
    """Z-score curvature and weight channels over all edges and steps."""
    mu = x.reshape(-1, 2).mean(axis=0)
    sd = x.reshape(-1, 2).std(axis=0)
    return (x - mu) / np.where(sd > 0, sd, 1.0)
