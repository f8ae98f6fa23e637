"""Discrete Ricci flow and the per-edge geometric sequences it produces."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .curvature import curvature_all_edges
from .graph import DistanceOracle, StaleOracleError, edge_distances

MAGIC = "gegcn-seq"
FORMAT_VERSION = 1
KERNELS = ("ma-yang", "ollivier")
METHODS = ("exact", "sinkhorn")


class SequenceFileError(ValueError):
    """A sequence file is truncated, corrupt, of the wrong version or for another graph."""


class FlowError(RuntimeError):
    def __init__(self, step, cause):
        super().__init__(f"flow failed at step {step}: {cause}")
        self.step = step


@dataclass(frozen=True)
class FlowConfig:
    """Parameters of one flow run.

    The defaults are the offline settings used for the benchmark
    precompute: ``delta=1``, ``alpha=0.5`` and Sinkhorn with ``eps=0.1``.
    ``normalize`` rescales the weights after each step so their total is
    preserved; it is off by default.
    """

    T: int = 10
    delta: float = 1.0
    alpha: float = 0.5
    eps: float = 0.1
    method: str = "sinkhorn"
    kernel: str = "ma-yang"
    w_min: float = 1e-6
    max_iter: int = 200
    tol: float = 1e-6
    normalize: bool = False

    def __post_init__(self):
        if int(self.T) != self.T or self.T < 1:
            raise ValueError(f"T must be a positive integer, got {self.T}")
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.kernel not in KERNELS:
            raise ValueError(f"kernel must be one of {KERNELS}, got {self.kernel!r}")
        if not self.w_min > 0:
            raise ValueError("w_min must be positive")

    def in_search_space(self):
        """True when T and delta fall in the usual tuning ranges (1..10, (0, 1])."""
        return 1 <= self.T <= 10 and 0 < self.delta <= 1.0


@dataclass
class GeometricSequence:
    """Curvature and weight trajectories, one row per edge of the self-looped graph.

    ``kappa`` and ``weight`` have shape ``(num_edges, T + 1)`` and share the
    edge order of ``edges``.
    """

    edges: np.ndarray
    kappa: np.ndarray
    weight: np.ndarray
    config: FlowConfig
    graph_sha256: str
    tool_version: str = __version__
    created: str | None = field(default=None, compare=False)

    @property
    def T(self):
        return self.kappa.shape[1] - 1

    @property
    def loop_mask(self):
        return self.edges[:, 0] == self.edges[:, 1]

    def inputs(self):
        """Stacked LSTM inputs of shape ``(num_edges, T + 1, 2)``: ``[kappa, w]`` per step."""
        return np.stack([self.kappa, self.weight], axis=2)

    def truncate(self, T):
        """Prefix of the trajectory up to step ``T``.

        The flow is sequential and deterministic, so this equals a fresh run
        with the shorter horizon.
        """
        if not 1 <= T <= self.T:
            raise ValueError(f"cannot truncate a T={self.T} sequence to T={T}")
        cfg = FlowConfig(**{**asdict(self.config), "T": T})
        return GeometricSequence(self.edges, self.kappa[:, :T + 1].copy(),
                                 self.weight[:, :T + 1].copy(), cfg, self.graph_sha256,
                                 self.tool_version, self.created)

    def check_graph(self, g):
        if g.content_hash() != self.graph_sha256:
            raise SequenceFileError("sequence was computed for a different graph (hash mismatch)")
        if len(g.edges) != len(self.edges) or not np.array_equal(g.edges, self.edges):
            raise SequenceFileError("sequence edge list does not match the graph's edges")


def flow_step(g, curvature, distances, delta, *, kernel="ma-yang", w_min=1e-6):
    """One forward-Euler step of the flow.

    Parameters
    ----------
    g : WeightedGraph
        Graph at step t; the curvature snapshot must come from its weights.
    curvature : CurvatureField
    distances : ndarray
        Edge distances ``rho_e(t)`` from :func:`~gegcn.graph.edge_distances`.
    delta : float
    kernel : {"ma-yang", "ollivier"}
        ``ma-yang`` multiplies curvature by the path distance, ``ollivier``
        by the edge's own weight.
    w_min : float
        Lower clamp on updated weights.

    Returns
    -------
    weights : ndarray
        Updated weights; self-loops stay at 1.
    clamped : ndarray of bool
        Edges whose update fell below ``w_min``.
    """
    if curvature.token != g.weights_token:
        raise StaleOracleError("curvature snapshot does not belong to these weights")
    if kernel not in KERNELS:
        raise ValueError(f"unknown kernel {kernel!r}")
    w = g.weights
    scale = distances if kernel == "ma-yang" else w
    new = w - delta * curvature.kappa * scale
    clamped = new < w_min
    new = np.where(clamped, w_min, new)
    loops = g.loop_mask
    new[loops] = 1.0
    clamped[loops] = False
    return new, clamped


def run_flow(g, cfg=FlowConfig(), *, on_step=None):
    """Run ``cfg.T`` flow steps on ``g`` (which should carry self-loops).

    Distances and curvature are recomputed on the updated weights after every
    step. ``on_step(t, field)`` is called after each curvature evaluation.
    """
    E = g.num_edges
    kappa = np.zeros((E, cfg.T + 1))
    weight = np.zeros((E, cfg.T + 1))
    loops = g.loop_mask
    cur = g
    total = g.weights[~loops].sum()
    for t in range(cfg.T + 1):
        try:
            oracle = DistanceOracle(cur)
            rho = edge_distances(cur, oracle)
            field_t = curvature_all_edges(cur, oracle, cfg.alpha, cfg.method, eps=cfg.eps,
                                          max_iter=cfg.max_iter, tol=cfg.tol)
        except Exception as exc:
            raise FlowError(t, exc) from exc
        kappa[:, t] = field_t.kappa
        weight[:, t] = cur.weights
        if on_step is not None:
            on_step(t, field_t)
        if t == cfg.T:
            break
        new, _ = flow_step(cur, field_t, rho, cfg.delta, kernel=cfg.kernel, w_min=cfg.w_min)
        if cfg.normalize:
            new[~loops] *= total / new[~loops].sum()
            new[~loops] = np.maximum(new[~loops], cfg.w_min)
        cur = cur.with_weights(new)
    kappa[loops] = 0.0
    weight[loops] = 1.0
    return GeometricSequence(g.edges.copy(), kappa, weight, cfg, g.content_hash())


def sequence_stats(seq):
    """Per-step min/mean/max of curvature and weight over non-loop edges.

    ``clamped`` counts edges sitting at the ``w_min`` floor at that step.
    """
    mask = ~seq.loop_mask
    k, w = seq.kappa[mask], seq.weight[mask]
    rows = []
    for t in range(seq.T + 1):
        kt, wt = k[:, t], w[:, t]
        empty = len(kt) == 0
        rows.append({
            "step": t,
            "kappa_min": np.nan if empty else float(kt.min()),
            "kappa_mean": np.nan if empty else float(kt.mean()),
            "kappa_max": np.nan if empty else float(kt.max()),
            "w_min": np.nan if empty else float(wt.min()),
            "w_mean": np.nan if empty else float(wt.mean()),
            "w_max": np.nan if empty else float(wt.max()),
            "clamped": int(np.sum(wt <= seq.config.w_min)) if t > 0 else 0,
        })
    return rows


def _manifest(seq):
    cfg = seq.config
    doc = {
        "magic": MAGIC,
        "version": FORMAT_VERSION,
        "graph_sha256": seq.graph_sha256,
        "T": seq.T,
        "delta": cfg.delta,
        "alpha": cfg.alpha,
        "eps": cfg.eps,
        "method": cfg.method,
        "kernel": cfg.kernel,
        "w_min": cfg.w_min,
        "max_iter": cfg.max_iter,
        "tol": cfg.tol,
        "normalize": cfg.normalize,
        "n_edges": len(seq.edges),
        "tool_version": seq.tool_version,
    }
    if seq.created is not None:
        doc["created"] = seq.created
    return doc


def save_sequence(seq, path):
    """Write JSON lines: a manifest, then one record per edge sorted by (u, v)."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(_manifest(seq)) + "\n")
        for (u, v), k, w in zip(seq.edges, seq.kappa, seq.weight):
            rec = {"u": int(u), "v": int(v), "kappa": k.tolist(), "weight": w.tolist()}
            fh.write(json.dumps(rec) + "\n")
    os.replace(tmp, path)


def load_sequence(path, graph=None):
    """Read a sequence file, validating structure and, if given, the graph hash."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise SequenceFileError(f"{path}: empty file")
    try:
        head = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise SequenceFileError(f"{path}:1: bad manifest: {exc.msg}") from None
    if head.get("magic") != MAGIC:
        raise SequenceFileError(f"{path}: not a sequence file")
    if head.get("version") != FORMAT_VERSION:
        raise SequenceFileError(f"{path}: unsupported format version {head.get('version')!r}")
    T = int(head["T"])
    cfg = FlowConfig(T=T, delta=head["delta"], alpha=head["alpha"], eps=head["eps"],
                     method=head["method"], kernel=head["kernel"], w_min=head["w_min"],
                     max_iter=head.get("max_iter", 200), tol=head.get("tol", 1e-6),
                     normalize=head.get("normalize", False))
    n_edges = head.get("n_edges")
    records = lines[1:]
    if n_edges is not None and len(records) != n_edges:
        raise SequenceFileError(f"{path}: expected {n_edges} edge records, found {len(records)}")
    edges = np.zeros((len(records), 2), dtype=np.int64)
    kappa = np.zeros((len(records), T + 1))
    weight = np.zeros((len(records), T + 1))
    for i, line in enumerate(records):
        try:
            rec = json.loads(line)
            edges[i] = rec["u"], rec["v"]
            k, w = rec["kappa"], rec["weight"]
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            raise SequenceFileError(f"{path}:{i + 2}: malformed edge record") from None
        if len(k) != T + 1 or len(w) != T + 1:
            raise SequenceFileError(
                f"{path}:{i + 2}: expected {T + 1} samples per series, got {len(k)}/{len(w)}")
        kappa[i], weight[i] = k, w
    if len(edges) > 1:
        order = np.lexsort((edges[:, 1], edges[:, 0]))
        if not np.array_equal(order, np.arange(len(edges))):
            raise SequenceFileError(f"{path}: edge records are not sorted by (u, v)")
    seq = GeometricSequence(edges, kappa, weight, cfg, head["graph_sha256"],
                            head.get("tool_version", "unknown"), head.get("created"))
    if graph is not None:
        seq.check_graph(graph)
    return seq
