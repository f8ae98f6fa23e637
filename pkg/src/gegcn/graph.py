"""Weighted undirected graphs, shortest paths and structural statistics."""

from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph


class GraphValidationError(ValueError):
    """Raised when graph data violates a structural invariant."""


class StaleOracleError(RuntimeError):
    """Raised when derived geometry no longer matches the graph's weights."""


def _canonical_edges(edges, weights):
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)
    if len(edges) != len(weights):
        raise GraphValidationError(
            f"{len(edges)} edges but {len(weights)} weights")
    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    order = np.lexsort((hi, lo))
    lo, hi, weights = lo[order], hi[order], weights[order]
    if len(lo):
        keep = np.ones(len(lo), dtype=bool)
        keep[1:] = (lo[1:] != lo[:-1]) | (hi[1:] != hi[:-1])
        lo, hi, weights = lo[keep], hi[keep], weights[keep]
    return np.stack([lo, hi], axis=1), weights


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Undirected graph with positive edge weights.

    Edges are stored once per unordered pair in canonical ``(min, max)``
    orientation and sorted lexicographically, so the row index of an edge in
    :attr:`edges` is its edge id. Self-loops appear as ``(v, v)`` rows.

    Construct through :meth:`from_edges`, which canonicalizes and merges
    duplicates (first occurrence wins); the raw constructor trusts its input.
    """

    n: int
    edges: np.ndarray
    weights: np.ndarray
    features: np.ndarray | None = None
    labels: np.ndarray | None = None
    name: str = ""
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 0:
            raise GraphValidationError("node count must be non-negative")
        if len(self.edges) and (self.edges.min() < 0 or self.edges.max() >= self.n):
            raise GraphValidationError("edge endpoint outside 0..n-1")
        if np.any(~np.isfinite(self.weights)) or np.any(self.weights <= 0):
            raise GraphValidationError("edge weights must be finite and strictly positive")
        if self.features is not None and self.features.shape[0] != self.n:
            raise GraphValidationError(
                f"feature rows {self.features.shape[0]} != node count {self.n}")
        if self.labels is not None and len(self.labels) != self.n:
            raise GraphValidationError(
                f"label count {len(self.labels)} != node count {self.n}")
        self.edges.setflags(write=False)
        self.weights.setflags(write=False)

    @classmethod
    def from_edges(cls, n, edges, weights=None, features=None, labels=None, name=""):
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if weights is None:
            weights = np.ones(len(edges))
        if len(edges) and (edges.min() < 0 or edges.max() >= n):
            raise GraphValidationError("edge endpoint outside 0..n-1")
        edges, weights = _canonical_edges(edges, weights)
        if features is not None:
            features = np.asarray(features, dtype=np.float64)
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64)
        return cls(int(n), edges, np.array(weights, dtype=np.float64),
                   features, labels, name)

    @property
    def num_edges(self):
        return len(self.edges)

    @cached_property
    def loop_mask(self):
        """Boolean mask over edge ids, true for self-loops."""
        return self.edges[:, 0] == self.edges[:, 1]

    @property
    def num_classes(self):
        if self.labels is None:
            return 0
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    @cached_property
    def weights_token(self):
        """Digest of the weight vector; derived geometry carries it for staleness checks."""
        return hashlib.sha1(self.weights.tobytes()).hexdigest()

    def content_hash(self):
        """SHA-256 over node count, non-loop edges and their weights.

        Self-loops are excluded so a graph and its self-looped version share a hash.
        """
        h = hashlib.sha256()
        mask = ~self.loop_mask
        h.update(np.int64(self.n).tobytes())
        h.update(np.ascontiguousarray(self.edges[mask]).tobytes())
        h.update(np.ascontiguousarray(self.weights[mask]).tobytes())
        return h.hexdigest()

    def with_weights(self, weights):
        """Return a copy sharing topology and node data but carrying ``weights``."""
        weights = np.array(weights, dtype=np.float64)
        if weights.shape != self.weights.shape:
            raise GraphValidationError("weight vector shape does not match edge count")
        return WeightedGraph(self.n, self.edges, weights, self.features, self.labels, self.name)

    def edge_id(self, u, v):
        u, v = min(u, v), max(u, v)
        lo = self.edges[:, 0]
        start, stop = np.searchsorted(lo, u, "left"), np.searchsorted(lo, u, "right")
        j = start + np.searchsorted(self.edges[start:stop, 1], v)
        if j < stop and self.edges[j, 1] == v:
            return int(j)
        raise KeyError((u, v))

    def adjacency(self):
        """Symmetric CSR weight matrix without self-loops."""
        if "adj" not in self._cache:
            mask = ~self.loop_mask
            u, v = self.edges[mask, 0], self.edges[mask, 1]
            w = self.weights[mask]
            a = sp.coo_matrix((np.r_[w, w], (np.r_[u, v], np.r_[v, u])), shape=(self.n, self.n))
            self._cache["adj"] = a.tocsr()
        return self._cache["adj"]

    def neighbors(self, u):
        """Non-loop neighbors of ``u`` and the corresponding edge weights."""
        a = self.adjacency()
        lo, hi = a.indptr[u], a.indptr[u + 1]
        return a.indices[lo:hi], a.data[lo:hi]

    def degrees(self):
        a = self.adjacency()
        return np.diff(a.indptr)

    def largest_component(self):
        """Induced subgraph on the largest connected component, nodes relabelled in order."""
        if self.n == 0:
            return self
        ncomp, comp = csgraph.connected_components(self.adjacency(), directed=False)
        if ncomp == 1:
            return self
        sizes = np.bincount(comp)
        keep = np.flatnonzero(comp == np.argmax(sizes))
        return self.subgraph(keep)

    def subgraph(self, nodes):
        nodes = np.asarray(nodes, dtype=np.int64)
        remap = -np.ones(self.n, dtype=np.int64)
        remap[nodes] = np.arange(len(nodes))
        m = (remap[self.edges[:, 0]] >= 0) & (remap[self.edges[:, 1]] >= 0)
        feats = None if self.features is None else self.features[nodes]
        labels = None if self.labels is None else self.labels[nodes]
        return WeightedGraph.from_edges(len(nodes), remap[self.edges[m]], self.weights[m],
                                        feats, labels, self.name)


def add_self_loops(g):
    """Attach a unit-weight self-loop to every node that lacks one."""
    has_loop = np.zeros(g.n, dtype=bool)
    has_loop[g.edges[g.loop_mask, 0]] = True
    missing = np.flatnonzero(~has_loop)
    if len(missing) == 0:
        return g
    edges = np.vstack([g.edges, np.stack([missing, missing], axis=1)])
    weights = np.r_[g.weights, np.ones(len(missing))]
    return WeightedGraph.from_edges(g.n, edges, weights, g.features, g.labels, g.name)


def dijkstra(g, source):
    """Single-source shortest path lengths; unreachable nodes get ``inf``.

    Self-loops never take part in relaxation.
    """
    if not 0 <= source < g.n:
        raise IndexError(f"source {source} outside graph of {g.n} nodes")
    a = g.adjacency()
    dist = np.full(g.n, np.inf)
    dist[source] = 0.0
    done = np.zeros(g.n, dtype=bool)
    heap = [(0.0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for k in range(a.indptr[u], a.indptr[u + 1]):
            v = a.indices[k]
            nd = d + a.data[k]
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


class DistanceOracle:
    """Lazily filled all-pairs shortest-path table for one weight snapshot.

    Rows are computed in batches with scipy's Dijkstra the first time a source
    is requested. The oracle remembers the ``weights_token`` of the graph it
    was built from; :meth:`check` raises :class:`StaleOracleError` against any
    other weight vector.
    """

    def __init__(self, g):
        self.graph = g
        self.token = g.weights_token
        self._table = np.full((g.n, g.n), np.nan)
        self._filled = np.zeros(g.n, dtype=bool)

    def check(self, g):
        if g.weights_token != self.token:
            raise StaleOracleError("distance oracle was computed for a different weight vector")

    def ensure(self, sources):
        sources = np.asarray(sources, dtype=np.int64)
        if self._filled[sources].all():
            return
        sources = np.unique(sources)
        todo = sources[~self._filled[sources]]
        if len(todo):
            self._table[todo] = csgraph.dijkstra(self.graph.adjacency(), directed=False,
                                                 indices=todo)
            self._filled[todo] = True

    def row(self, u):
        self.ensure([u])
        return self._table[u]

    def submatrix(self, xs, ys):
        """Distances between every node in ``xs`` and every node in ``ys``."""
        xs = np.asarray(xs, dtype=np.int64)
        self.ensure(xs)
        return self._table[np.ix_(xs, np.asarray(ys, dtype=np.int64))]

    def __call__(self, u, v):
        return float(self.row(u)[v])


def edge_distances(g, oracle):
    """Shortest-path length between the endpoints of every edge.

    Self-loops get distance 1 (their constant weight), not a path length.
    """
    oracle.check(g)
    rho = np.ones(g.num_edges)
    mask = ~g.loop_mask
    u, v = g.edges[mask, 0], g.edges[mask, 1]
    oracle.ensure(u)
    rho[mask] = oracle._table[u, v]
    return rho


def homophily_index(g, labels=None):
    """Mean over non-isolated nodes of the fraction of same-label neighbors."""
    labels = g.labels if labels is None else np.asarray(labels)
    if labels is None:
        raise GraphValidationError("homophily needs node labels")
    a = g.adjacency()
    deg = np.diff(a.indptr)
    active = deg > 0
    if not active.any():
        raise ValueError("homophily is undefined when every node is isolated")
    rows = np.repeat(np.arange(g.n), deg)
    same = (labels[rows] == labels[a.indices]).astype(float)
    frac = np.bincount(rows, weights=same, minlength=g.n)[active] / deg[active]
    return float(frac.mean())
