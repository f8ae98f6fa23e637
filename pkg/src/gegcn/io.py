"""Dataset ingestion and the normalized JSON graph format.

Three layouts are understood:

``planetoid-raw``
    ``<name>.content`` (``id feat_1 ... feat_d label`` per line) and
    ``<name>.cites`` (``cited citing`` per line), as in the LINQS Cora and
    Citeseer archives. The original LINQS WebKB archives use the same layout.
``webkb-raw``
    ``out1_node_feature_label.txt`` (``id<TAB>f1,f2,...<TAB>label``) and
    ``out1_graph_edges.txt`` (``u<TAB>v``), each with a header line.
``normalized-json``
    ``{"name": str, "n": int, "edges": [[u, v, w], ...], "features": [[...]] | null,
    "labels": [int, ...] | null}``.

Raw layouts are symmetrized, self-loops dropped and weights set to 1.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .graph import GraphValidationError, WeightedGraph

FORMATS = ("planetoid-raw", "webkb-raw", "normalized-json")


class GraphFormatError(ValueError):
    """A graph file failed to parse; ``line`` is 1-based when known."""

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)
        self.path = path
        self.line = line


def _read_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if line:
                yield lineno, line


def _label_codes(names):
    classes = sorted(set(names))
    index = {c: i for i, c in enumerate(classes)}
    return np.array([index[c] for c in names], dtype=np.int64)


def _finish(n, edge_list, feats, labels, name, largest_component):
    edges = np.array(edge_list, dtype=np.int64).reshape(-1, 2)
    edges = edges[edges[:, 0] != edges[:, 1]]
    g = WeightedGraph.from_edges(n, edges, None, feats, labels, name)
    return g.largest_component() if largest_component else g


def _resolve(path, suffix):
    path = Path(path)
    if path.is_dir():
        hits = sorted(path.glob(f"*{suffix}"))
        if len(hits) != 1:
            raise GraphFormatError(f"expected exactly one *{suffix} file", path)
        return hits[0]
    return path.with_suffix(suffix)


def _load_planetoid(path, largest_component):
    content, cites = _resolve(path, ".content"), _resolve(path, ".cites")
    for p in (content, cites):
        if not p.exists():
            raise FileNotFoundError(p)
    ids, rows, names = {}, [], []
    width = None
    for lineno, line in _read_lines(content):
        parts = line.split()
        if len(parts) < 2:
            raise GraphFormatError("expected id, features and label", content, lineno)
        if width is None:
            width = len(parts)
        elif len(parts) != width:
            raise GraphFormatError(f"expected {width} columns, got {len(parts)}", content, lineno)
        if parts[0] in ids:
            raise GraphFormatError(f"duplicate node id {parts[0]!r}", content, lineno)
        try:
            rows.append([float(x) for x in parts[1:-1]])
        except ValueError as exc:
            raise GraphFormatError(str(exc), content, lineno) from None
        ids[parts[0]] = len(ids)
        names.append(parts[-1])
    edges = []
    for lineno, line in _read_lines(cites):
        parts = line.split()
        if len(parts) != 2:
            raise GraphFormatError("expected two node ids", cites, lineno)
        try:
            edges.append((ids[parts[0]], ids[parts[1]]))
        except KeyError as exc:
            raise GraphValidationError(
                f"{cites}:{lineno}: edge endpoint {exc.args[0]!r} is not a known node") from None
    feats = np.array(rows, dtype=np.float64).reshape(len(ids), -1)
    return _finish(len(ids), edges, feats, _label_codes(names), content.stem, largest_component)


def _load_webkb(path, largest_component):
    path = Path(path)
    nodes_file = path / "out1_node_feature_label.txt"
    edges_file = path / "out1_graph_edges.txt"
    for p in (nodes_file, edges_file):
        if not p.exists():
            raise FileNotFoundError(p)
    records = {}
    for lineno, line in _read_lines(nodes_file):
        if lineno == 1 and line.startswith("node_id"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise GraphFormatError("expected id<TAB>features<TAB>label", nodes_file, lineno)
        try:
            nid = int(parts[0])
            records[nid] = ([float(x) for x in parts[1].split(",")], int(parts[2]))
        except ValueError as exc:
            raise GraphFormatError(str(exc), nodes_file, lineno) from None
    n = len(records)
    if sorted(records) != list(range(n)):
        raise GraphFormatError("node ids must be 0..n-1", nodes_file)
    feats = np.array([records[i][0] for i in range(n)], dtype=np.float64)
    labels = np.array([records[i][1] for i in range(n)], dtype=np.int64)
    edges = []
    for lineno, line in _read_lines(edges_file):
        if lineno == 1 and line.startswith("node_id"):
            continue
        parts = line.split()
        try:
            u, v = int(parts[0]), int(parts[1])
        except (ValueError, IndexError):
            raise GraphFormatError("expected two integer node ids", edges_file, lineno) from None
        if not (0 <= u < n and 0 <= v < n):
            raise GraphValidationError(f"{edges_file}:{lineno}: edge endpoint outside 0..{n - 1}")
        edges.append((u, v))
    return _finish(n, edges, feats, labels, path.name, largest_component)


def _load_json(path, largest_component):
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise GraphFormatError(exc.msg, path, exc.lineno) from None
    try:
        n = int(doc["n"])
        raw = doc["edges"]
        feats = doc.get("features")
        labels = doc.get("labels")
        name = doc.get("name") or path.stem
    except (KeyError, TypeError) as exc:
        raise GraphFormatError(f"missing or malformed field {exc}", path) from None
    if any(len(e) != 3 for e in raw):
        raise GraphFormatError("edges must be [u, v, w] triples", path)
    edges = np.array([[e[0], e[1]] for e in raw], dtype=np.int64).reshape(-1, 2)
    weights = np.array([e[2] for e in raw], dtype=np.float64)
    if len(edges) and (edges.min() < 0 or edges.max() >= n):
        raise GraphValidationError(f"{path}: edge endpoint outside 0..{n - 1}")
    if feats is not None:
        feats = np.array(feats, dtype=np.float64).reshape(n, -1)
    g = WeightedGraph.from_edges(n, edges, weights, feats, labels, name)
    return g.largest_component() if largest_component else g


def load_graph(path, format="normalized-json", *, largest_component=None):
    """Read a graph from disk.

    Parameters
    ----------
    path : str or Path
        Directory (raw formats) or file.
    format : {"planetoid-raw", "webkb-raw", "normalized-json"}
    largest_component : bool, optional
        Keep only the largest connected component. Defaults to True for the
        raw formats, which matches the usual benchmark preprocessing, and
        False for normalized JSON, which is loaded as-is.
    """
    if format not in FORMATS:
        raise ValueError(f"unknown graph format {format!r}; expected one of {FORMATS}")
    if largest_component is None:
        largest_component = format != "normalized-json"
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    if format == "planetoid-raw":
        return _load_planetoid(path, largest_component)
    if format == "webkb-raw":
        return _load_webkb(path, largest_component)
    return _load_json(path, largest_component)


def graph_to_json(g):
    doc = {
        "name": g.name,
        "n": g.n,
        "edges": [[int(u), int(v), float(w)] for (u, v), w in zip(g.edges, g.weights)],
        "features": None if g.features is None else g.features.tolist(),
        "labels": None if g.labels is None else [int(x) for x in g.labels],
    }
    return doc


def save_graph(g, path):
    """Write ``g`` as normalized JSON (atomically, via a sibling temp file)."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(graph_to_json(g), fh)
    os.replace(tmp, path)
