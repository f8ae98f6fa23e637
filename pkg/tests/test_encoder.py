import numpy as np
import pytest

from gegcn import autograd as ag
from gegcn.autograd import Parameter, Tensor
from gegcn.encoder import (AdjacencyLayout, LstmParams, build_importance_matrix, edge_score,
                           encode_edge_sequence, lstm_cell, standardize_inputs)
from gegcn.graph import WeightedGraph, add_self_loops

from conftest import random_connected_graph


def test_zero_params_zero_state():
    p = LstmParams.zeros(4)
    h, c = lstm_cell(np.ones((1, 2)), np.zeros((1, 4)), np.zeros((1, 4)), p)
    assert np.all(h.data == 0) and np.all(c.data == 0)


def test_zero_params_forget_half():
    p = LstmParams.zeros(3)
    v = np.array([[1.0, -2.0, 4.0]])
    _, c = lstm_cell(np.zeros((1, 2)), np.zeros((1, 3)), v, p)
    assert np.array_equal(c.data, 0.5 * v)


def test_constant_input_zero_params_any_T():
    p = LstmParams.zeros(5)
    for T in (0, 3, 9):
        h = encode_edge_sequence(np.tile([0.3, 1.2], (T + 1, 1)), p)
        assert np.all(h.data == 0)


def test_single_step_is_one_cell():
    p = LstmParams.init(np.random.default_rng(0), 6)
    x = np.array([[0.2, 0.7]])
    h = encode_edge_sequence(x, p)
    h1, _ = lstm_cell(x, np.zeros((1, 6)), np.zeros((1, 6)), p)
    assert np.array_equal(h.data, h1.data)


def test_order_sensitivity():
    p = LstmParams.init(np.random.default_rng(1), 8)
    seq = np.array([[0.5, 1.0], [-0.2, 1.3], [0.1, 0.4], [0.9, 2.0]])
    a = encode_edge_sequence(seq, p).data
    b = encode_edge_sequence(seq[::-1], p).data
    assert np.abs(a - b).max() > 1e-6


def test_batched_equals_per_edge():
    rng = np.random.default_rng(2)
    p = LstmParams.init(rng, 4)
    x = rng.standard_normal((5, 3, 2))
    batch = encode_edge_sequence(x, p).data
    for e in range(5):
        assert np.allclose(batch[e], encode_edge_sequence(x[e], p).data[0], rtol=0, atol=1e-15)


def test_cell_gradients_finite_differences():
    rng = np.random.default_rng(3)
    p = LstmParams.init(rng, 3)
    x = rng.standard_normal((2, 2))
    h0, c0 = rng.standard_normal((2, 3)), rng.standard_normal((2, 3))
    R = rng.standard_normal((2, 3))

    def loss():
        h, c = lstm_cell(x, h0, c0, p)
        return ag.total((h + c * 0.5) * R)

    ag.backward(loss())
    for prm in p.parameters()[:12]:
        ana = prm.grad.copy()
        num = np.zeros_like(prm.data)
        for idx in np.ndindex(prm.shape):
            old = prm.data[idx]
            prm.data[idx] = old + 1e-6
            fp = loss().item()
            prm.data[idx] = old - 1e-6
            fm = loss().item()
            prm.data[idx] = old
            num[idx] = (fp - fm) / 2e-6
        assert np.allclose(ana, num, rtol=1e-5, atol=1e-9), prm.name


def test_init_conventions():
    p = LstmParams.init(np.random.default_rng(0), 16)
    assert p.b["f"].data.tolist() == [[1.0] * 16]
    assert np.all(p.b["i"].data == 0) and np.all(p.b_s.data == 0)
    assert p.W["f"].shape == (2, 16) and p.U["c"].shape == (16, 16)
    # weight tying: parameter count depends on d only
    assert sum(q.data.size for q in p.parameters()) == 4 * (2 * 16 + 16 * 16 + 16) + 17


def test_edge_score_examples():
    p = LstmParams.zeros(4)
    assert edge_score(np.zeros((1, 4)), p).item() == 0.5
    p.b_s.data[:] = 10.0
    assert abs(edge_score(np.zeros((1, 4)), p).item() - 0.9999546) < 1e-6
    q = LstmParams.init(np.random.default_rng(0), 4)
    s = edge_score(np.random.default_rng(1).standard_normal((1000, 4)) * 5, q).data
    assert np.all((s > 0) & (s < 1))


def test_per_node_bias_only_touches_loops():
    p = LstmParams.init(np.random.default_rng(0), 4, n_nodes=3)
    p.node_bias.data[:] = [[1.0], [2.0], [3.0]]
    h = np.zeros((4, 4))
    loops = np.array([-1, 0, 2, -1])
    s = edge_score(h, p, loops).data[:, 0]
    base = edge_score(h, LstmParams.init(np.random.default_rng(0), 4)).data[:, 0]
    assert s[0] == base[0] and s[3] == base[3]
    assert s[1] > base[1] and s[2] > s[1]


def test_importance_matrix_placement():
    g = add_self_loops(WeightedGraph.from_edges(2, [(0, 1)]))
    scores = {(0, 1): 0.8, (0, 0): 0.6, (1, 1): 0.6}
    imp = build_importance_matrix(scores, g)
    assert np.allclose(imp.dense(), [[0.6, 0.8], [0.8, 0.6]])
    with pytest.raises(KeyError):
        build_importance_matrix({(0, 1): 0.5}, g)


def test_importance_matrix_symmetric_support(rng):
    g = add_self_loops(random_connected_graph(rng, 12))
    imp = build_importance_matrix(rng.random(g.num_edges), g)
    A = imp.dense()
    assert np.array_equal(A, A.T)
    support = set(zip(*np.nonzero(A)))
    expect = {(int(u), int(v)) for u, v in g.edges} | {(int(v), int(u)) for u, v in g.edges}
    assert support == expect


def test_importance_gradient_reaches_scores(rng):
    g = add_self_loops(random_connected_graph(rng, 6))
    s = Parameter(rng.random((g.num_edges, 1)))
    imp = build_importance_matrix(s, g)
    ag.backward(ag.total(imp.values))
    # every non-loop edge appears twice, every loop once
    assert np.array_equal(s.grad[:, 0], np.where(g.loop_mask, 1.0, 2.0))


def test_layout_entry_owner(triangle):
    g = add_self_loops(triangle)
    lay = AdjacencyLayout.from_graph(g)
    assert lay.pattern.nnz == 9
    for r, c, e in zip(lay.pattern.rows, lay.pattern.cols, lay.edge_of_entry):
        assert g.edge_id(r, c) == e


def test_standardize_inputs():
    x = np.random.default_rng(0).standard_normal((7, 4, 2)) * 3 + 5
    z = standardize_inputs(x)
    assert np.allclose(z.reshape(-1, 2).mean(0), 0) and np.allclose(z.reshape(-1, 2).std(0), 1)
    const = np.ones((3, 2, 2))
    assert np.all(standardize_inputs(const) == 0)
