"""Curvature-aware GCN, the plain GCN baseline, ablations and the training loop."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autograd as ag
from .autograd import Parameter
from .encoder import (AdjacencyLayout, ImportanceMatrix, LstmParams, build_importance_matrix,
                      edge_score, encode_edge_sequence, standardize_inputs)
from .graph import add_self_loops

MODES = ("gegcn", "gcn-baseline", "ablate-first", "ablate-last", "ablate-mean")
SELFLOOP_MODES = ("shared", "per-node-bias")
HOMOPHILIC_SPLIT = (0.2, 0.1, 0.7)
HETEROPHILIC_SPLIT = (0.6, 0.2, 0.2)


class DegreeError(ValueError):
    pass


@dataclass
class NormalizedAdjacency:
    layout: AdjacencyLayout
    values: ag.Tensor

    def dense(self):
        return self.layout.pattern.matrix(self.values.data).toarray()


def normalize_geometric(imp):
    """``D^-1/2 A D^-1/2`` of an importance matrix, differentiable in its values."""
    pat = imp.layout.pattern
    deg = ag.segment_sum(imp.values, pat.rows, pat.n_rows)
    if np.any(deg.data <= 0):
        raise DegreeError("adjacency has a row with non-positive degree")
    dinv = ag.power(deg, -0.5)
    vals = imp.values * ag.gather_rows(dinv, pat.rows) * ag.gather_rows(dinv, pat.cols)
    return NormalizedAdjacency(imp.layout, vals)


def normalize_static(g, layout=None):
    """Symmetric normalization of the binary adjacency of ``g`` (self-loops as present)."""
    layout = layout or AdjacencyLayout.from_graph(g)
    ones = build_importance_matrix(np.ones(g.num_edges), g, layout)
    return normalize_geometric(ones)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def ablation_matrix(seq, variant, g, layout=None):
    """Fixed scores ``sigmoid(kappa)`` from the first, last or mean curvature of each edge."""
    k = seq.kappa
    if variant == "first":
        s = k[:, 0]
    elif variant == "last":
        s = k[:, -1]
    elif variant == "mean":
        s = k.mean(axis=1)
    else:
        raise ValueError(f"unknown ablation variant {variant!r}")
    return build_importance_matrix(_sigmoid(s), g, layout)


@dataclass
class TrainConfig:
    lr: float = 0.01
    weight_decay: float = 5e-4
    dropout: float = 0.5
    hidden: int = 64
    layers: int = 2
    max_epochs: int = 1000
    patience: int = 100
    seeds: int = 10
    lstm_hidden: int = 16
    selfloop_mode: str = "shared"
    zscore: bool = False

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError("need at least one layer")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")
        if self.lr <= 0 or self.weight_decay < 0:
            raise ValueError("lr must be positive and weight_decay non-negative")
        if self.selfloop_mode not in SELFLOOP_MODES:
            raise ValueError(f"selfloop_mode must be one of {SELFLOOP_MODES}")

    def search_space_violations(self):
        """Names of settings outside the usual tuning ranges."""
        bad = []
        if not 1e-5 <= self.lr <= 1e-2:
            bad.append("lr")
        if not 1e-6 <= self.weight_decay <= 1e-2:
            bad.append("weight_decay")
        if not 0.01 <= self.dropout <= 0.99:
            bad.append("dropout")
        if self.hidden not in (32, 64, 128):
            bad.append("hidden")
        return bad


@dataclass
class SplitSpec:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        self.train, self.val, self.test = (np.sort(np.asarray(x, dtype=np.int64))
                                           for x in (self.train, self.val, self.test))
        both = np.concatenate([self.train, self.val, self.test])
        if len(np.unique(both)) != len(both):
            raise ValueError("train/val/test index sets overlap")

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in ("train", "val", "test")}

    @classmethod
    def from_dict(cls, d):
        return cls(d["train"], d["val"], d["test"])


def make_split(labels, fractions=HETEROPHILIC_SPLIT, seed=0):
    """Stratified random split; each class is divided by ``fractions`` (train, val, rest)."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    parts = ([], [], [])
    for c in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == c))
        n_tr = int(round(fractions[0] * len(idx)))
        n_va = int(round(fractions[1] * len(idx)))
        parts[0].append(idx[:n_tr])
        parts[1].append(idx[n_tr:n_tr + n_va])
        parts[2].append(idx[n_tr + n_va:])
    return SplitSpec(*(np.concatenate(p) for p in parts))


@dataclass
class GegcnModel:
    mode: str
    layers: list
    encoder: LstmParams | None
    dropout: float

    @classmethod
    def init(cls, rng, in_dim, n_classes, cfg, mode="gegcn", n_nodes=None):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        dims = [in_dim] + [cfg.hidden] * (cfg.layers - 1) + [n_classes]
        encoder = None
        if mode == "gegcn":
            nb = n_nodes if cfg.selfloop_mode == "per-node-bias" else None
            encoder = LstmParams.init(rng, cfg.lstm_hidden, nb)
        layers = [Parameter(ag.glorot(rng, a, b), f"W{k}")
                  for k, (a, b) in enumerate(zip(dims[:-1], dims[1:]))]
        return cls(mode, layers, encoder, cfg.dropout)

    def parameters(self):
        ps = list(self.layers)
        if self.encoder is not None:
            ps += self.encoder.parameters()
        return ps


@dataclass
class GraphInputs:
    """Everything the forward pass needs that does not change across epochs."""

    graph: object
    layout: AdjacencyLayout
    X: ag.Tensor
    labels: np.ndarray
    seq_inputs: np.ndarray | None = None
    loop_nodes: np.ndarray | None = None
    fixed: NormalizedAdjacency | None = None

    @classmethod
    def build(cls, graph, seq=None, mode="gegcn", zscore=False):
        g = add_self_loops(graph)
        if g.features is None or g.labels is None:
            raise ValueError("training needs node features and labels")
        layout = AdjacencyLayout.from_graph(g)
        inputs = cls(g, layout, ag.Tensor(g.features), g.labels)
        if mode != "gcn-baseline":
            if seq is None:
                raise ValueError(f"mode {mode!r} needs a geometric sequence")
            seq.check_graph(g)
        if mode == "gegcn":
            x = seq.inputs()
            inputs.seq_inputs = standardize_inputs(x) if zscore else x
            inputs.loop_nodes = np.where(g.loop_mask, g.edges[:, 0], -1)
        elif mode == "gcn-baseline":
            inputs.fixed = normalize_static(g, layout)
        else:
            imp = ablation_matrix(seq, mode.split("-")[1], g, layout)
            inputs.fixed = normalize_geometric(imp)
        return inputs


def adjacency(model, inputs):
    """Normalized propagation matrix for the model's mode."""
    if model.mode != "gegcn":
        return inputs.fixed
    h = encode_edge_sequence(inputs.seq_inputs, model.encoder)
    scores = edge_score(h, model.encoder, inputs.loop_nodes)
    return normalize_geometric(build_importance_matrix(scores, inputs.graph, inputs.layout))


def model_forward(model, adj, X, *, training=False, rng=None):
    """Stacked propagation ``A (H W)``; ReLU and dropout between layers, raw logits out."""
    H = ag.as_tensor(X)
    pat = adj.layout.pattern
    last = len(model.layers) - 1
    for k, W in enumerate(model.layers):
        H = ag.spmm(adj.values, pat, H @ W)
        if k < last:
            H = ag.relu(H)
            H = ag.dropout(H, model.dropout, rng, training)
    return H


def accuracy(logits, labels, idx):
    if len(idx) == 0:
        return float("nan")
    return float(np.mean(np.argmax(logits[idx], axis=1) == labels[idx]))


@dataclass
class RunMetrics:
    config: dict
    seed: int
    best_val: float
    test_acc: float
    epochs: int
    best_epoch: int = 0
    curve: list = field(default_factory=list)
    status: str = "ok"
    failed_epoch: int | None = None

    def to_json(self):
        return json.dumps(asdict(self))

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def train(model, inputs, split, cfg, rng, *, record_curve=True, config=None):
    """Full-batch training with early stopping on validation accuracy.

    Returns the test accuracy at the epoch of best validation accuracy (ties
    go to the lower validation loss).
    """
    params = model.parameters()
    y = inputs.labels
    best = (-1.0, math.inf)
    metrics = RunMetrics(config or {}, 0, float("nan"), float("nan"), 0)
    since = 0
    for epoch in range(1, cfg.max_epochs + 1):
        adj = adjacency(model, inputs)
        logits = model_forward(model, adj, inputs.X, training=True, rng=rng)
        loss = ag.softmax_cross_entropy(logits, y, split.train)
        lval = loss.item()
        if not np.isfinite(lval):
            metrics.status, metrics.failed_epoch, metrics.epochs = "failed", epoch, epoch
            return metrics
        ag.backward(loss)
        ag.adam_step(params, cfg.lr, weight_decay=cfg.weight_decay)
        ag.zero_grad(params)

        out = model_forward(model, adjacency(model, inputs), inputs.X).data
        val_loss = ag.softmax_cross_entropy(out, y, split.val).item() if len(split.val) else 0.0
        tr, va, te = (accuracy(out, y, s) for s in (split.train, split.val, split.test))
        if record_curve:
            metrics.curve.append({"epoch": epoch, "loss": lval, "train_acc": tr,
                                  "val_acc": va, "test_acc": te})
        metrics.epochs = epoch
        if va > best[0] or (va == best[0] and val_loss < best[1]):
            best = (va, val_loss)
            metrics.best_val, metrics.test_acc, metrics.best_epoch = va, te, epoch
            since = 0
        else:
            since += 1
            if since >= cfg.patience:
                break
    return metrics


def run_seed(graph, seq, mode, cfg, seed, *, split=None, fractions=HETEROPHILIC_SPLIT,
             inputs=None, record_curve=True):
    """Build model and split from ``seed`` and train once."""
    inputs = inputs or GraphInputs.build(graph, seq, mode, cfg.zscore)
    split = split or make_split(inputs.labels, fractions, seed)
    rng = np.random.default_rng(seed)
    model = GegcnModel.init(rng, inputs.X.shape[1], int(inputs.labels.max()) + 1, cfg, mode,
                            inputs.graph.n)
    config = {"mode": mode, "train": asdict(cfg), "fractions": list(fractions),
              "dataset": getattr(graph, "name", "")}
    if seq is not None and mode != "gcn-baseline":
        config["flow"] = asdict(seq.config)
        config["graph_sha256"] = seq.graph_sha256
    m = train(model, inputs, split, cfg, rng, record_curve=record_curve, config=config)
    m.seed = seed
    return m


def summarize(values):
    values = np.asarray([v for v in values if np.isfinite(v)], dtype=float)
    if len(values) == 0:
        return float("nan"), float("nan")
    return float(values.mean()), float(values.std())


def sweep(kind, grid, graph, seq, mode, cfg, seeds, *, fractions=HETEROPHILIC_SPLIT,
          record_curve=False):
    """Train every (grid value, seed) pair and summarize test accuracy per grid value.

    ``kind="depth"`` varies the layer count. ``kind="flow-T"`` varies the flow
    horizon, taking either a mapping ``T -> sequence`` or one long sequence
    that is truncated. Failed cells are recorded and the sweep continues.
    """
    if kind not in ("depth", "flow-T"):
        raise ValueError(f"unknown sweep kind {kind!r}")
    seeds = list(range(seeds)) if isinstance(seeds, int) else list(seeds)
    rows = []
    for value in grid:
        accs, errors = [], []
        try:
            cell_cfg, cell_seq = cfg, seq
            if kind == "depth":
                cell_cfg = replace(cfg, layers=int(value))
            elif isinstance(seq, dict):
                cell_seq = seq[int(value)]
            else:
                cell_seq = seq.truncate(int(value))
        except (KeyError, ValueError) as exc:
            errors.append(f"cell setup: {exc}")
            seeds_here = []
        else:
            seeds_here = seeds
        inputs = None
        for s in seeds_here:
            try:
                inputs = inputs or GraphInputs.build(graph, cell_seq, mode, cell_cfg.zscore)
                m = run_seed(graph, cell_seq, mode, cell_cfg, s, fractions=fractions,
                             inputs=inputs, record_curve=record_curve)
            except Exception as exc:  # a broken cell must not stop the sweep
                errors.append(f"seed {s}: {exc}")
                continue
            if m.status == "ok":
                accs.append(m.test_acc)
            else:
                errors.append(f"seed {s}: diverged at epoch {m.failed_epoch}")
        mean, std = summarize(accs)
        rows.append({"grid_value": value, "mean": mean, "std": std, "n_seeds": len(accs),
                     "errors": errors})
    return rows
