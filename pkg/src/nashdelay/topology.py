"""Undirected communication graphs and the estimation-layer matrices."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Graph:
    """Unweighted undirected graph stored as a 0/1 adjacency matrix."""

    adj: np.ndarray

    def __post_init__(self):
        adj = np.array(self.adj, dtype=float)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise GraphError(f"adjacency must be square, got shape {adj.shape}")
        if not np.all((adj == 0) | (adj == 1)):
            raise GraphError("adjacency entries must be 0 or 1")
        if not np.array_equal(adj, adj.T):
            raise GraphError("adjacency must be symmetric")
        if np.any(np.diag(adj) != 0):
            raise GraphError("self-loops are not allowed")
        adj.setflags(write=False)
        object.__setattr__(self, "adj", adj)

    @property
    def n(self) -> int:
        return self.adj.shape[0]

    @property
    def degrees(self) -> np.ndarray:
        return self.adj.sum(axis=1)

    def neighbors(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.adj[i])

    def edges(self) -> list[tuple[int, int]]:
        """Edge list with 0-based endpoints, ``i < j``."""
        rows, cols = np.nonzero(np.triu(self.adj))
        return list(zip(rows.tolist(), cols.tolist()))

    @classmethod
    def from_edges(cls, n: int, edges) -> "Graph":
        """Graph on nodes ``0..n-1``; rejects self-loops and duplicate edges."""
        adj = np.zeros((n, n))
        seen = set()
        for i, j in edges:
            i, j = int(i), int(j)
            if not (0 <= i < n and 0 <= j < n):
                raise GraphError(f"edge ({i}, {j}) out of range for {n} nodes")
            if i == j:
                raise GraphError(f"self-loop at node {i}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise GraphError(f"duplicate edge {key}")
            seen.add(key)
            adj[i, j] = adj[j, i] = 1.0
        return cls(adj)


@dataclass(frozen=True)
class EstimationMatrices:
    """``B``, ``P = -(L kron I + B)`` and the Laplacian ``L``."""

    B: np.ndarray
    P: np.ndarray
    L: np.ndarray


def make_graph(kind: str, n: int, edges=None) -> Graph:
    """Build a named topology.

    Star and wheel graphs use node 0 as the hub; the wheel rim is a ring on
    nodes ``1..n-1``. ``custom`` takes 0-based ``edges``.
    """
    if kind == "ring" and n < 3:
        raise GraphError(f"ring graph needs n >= 3, got {n}")
    if kind == "wheel" and n < 4:
        raise GraphError(f"wheel graph needs a rim of at least 3 nodes (n >= 4), got {n}")
    if n < 2:
        raise GraphError(f"graph needs n >= 2, got {n}")
    if kind == "ring":
        pairs = [(i, (i + 1) % n) for i in range(n)]
    elif kind == "complete":
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    elif kind == "star":
        pairs = [(0, j) for j in range(1, n)]
    elif kind == "wheel":
        rim = n - 1
        pairs = [(0, j) for j in range(1, n)] + [(1 + k, 1 + (k + 1) % rim) for k in range(rim)]
    elif kind == "custom":
        if edges is None:
            raise GraphError("custom graph needs an edge list")
        pairs = list(edges)
    else:
        raise GraphError(f"unknown graph kind {kind!r}")
    return Graph.from_edges(n, pairs)


def laplacian(g: Graph) -> np.ndarray:
    return np.diag(g.degrees) - g.adj


def build_estimation_matrices(g: Graph) -> EstimationMatrices:
    n = g.n
    L = laplacian(g)
    B = np.diag(g.adj.reshape(-1))
    P = -(np.kron(L, np.eye(n)) + B)
    return EstimationMatrices(B, P, L)


def is_connected(g: Graph) -> bool:
    seen = {0}
    queue = deque([0])
    while queue:
        i = queue.popleft()
        for j in g.neighbors(i):
            if j not in seen:
                seen.add(int(j))
                queue.append(int(j))
    return len(seen) == g.n


def graph_from_dict(doc: dict) -> Graph:
    """``{kind, n}`` or ``{n, edges}`` with 1-based edge endpoints."""
    if not isinstance(doc, dict) or "n" not in doc:
        raise GraphError("graph document must be a mapping with field 'n'")
    n = int(doc["n"])
    if "edges" in doc:
        return Graph.from_edges(n, [(i - 1, j - 1) for i, j in doc["edges"]])
    if "kind" in doc:
        return make_graph(doc["kind"], n)
    raise GraphError("graph document needs 'kind' or 'edges'")


def load_graph(path) -> Graph:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise GraphError(f"{path}: {exc}") from exc
    try:
        return graph_from_dict(doc)
    except GraphError as exc:
        raise GraphError(f"{path}: {exc}") from exc


def save_graph(g: Graph, path):
    doc = {"n": g.n, "edges": [[i + 1, j + 1] for i, j in g.edges()]}
    Path(path).write_text(yaml.safe_dump(doc, sort_keys=False))


def resolve_graph(source: str) -> Graph:
    """A graph file path, or ``kind:n`` such as ``wheel:5``."""
    if Path(source).is_file():
        return load_graph(source)
    kind, _, n = source.partition(":")
    if not n:
        raise GraphError(f"graph preset {source!r} needs a size, e.g. {kind}:5")
    return make_graph(kind, int(n))
