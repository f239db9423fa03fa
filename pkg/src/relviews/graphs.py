"""Complete undirected graphs over image views.

A view graph holds one global view (always node 0) plus k local views, with
an n-dimensional feature vector per node and per unordered node pair. Edge
features are stored once per pair in canonical (i < j) lexicographic order,
which enforces undirectedness structurally and keeps exports byte-stable.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

GLOBAL_INDEX = 0


def num_pairs(n: int) -> int:
    return n * (n - 1) // 2


def pair_index(i: int, j: int, n: int) -> int:
    """Row of the unordered pair (i, j) in canonical lexicographic order."""
    if i == j:
        raise ValueError("no self-edges in a view graph")
    if i > j:
        i, j = j, i
    if i < 0 or j >= n:
        raise IndexError(f"pair ({i}, {j}) out of range for {n} nodes")
    # pairs (0,1)..(0,n-1), (1,2)..(1,n-1), ...
    return i * (2 * n - i - 1) // 2 + (j - i - 1)


def pair_list(n: int) -> list[tuple[int, int]]:
    return list(combinations(range(n), 2))


@dataclass(frozen=True)
class ViewGraph:
    """Complete graph over one global + k local views. Immutable once built."""

    node_features: np.ndarray   # (N, n)
    edge_features: np.ndarray   # (N*(N-1)/2, n), canonical pair order
    global_index: int = GLOBAL_INDEX
    label: int | None = None

    def __post_init__(self):
        nodes = np.asarray(self.node_features, dtype=np.float64)
        edges = np.asarray(self.edge_features, dtype=np.float64)
        object.__setattr__(self, "node_features", nodes)
        object.__setattr__(self, "edge_features", edges)
        if nodes.ndim != 2 or nodes.shape[0] < 1:
            raise ValueError("node_features must be a non-empty (N, n) array")
        if edges.shape != (num_pairs(nodes.shape[0]), nodes.shape[1]):
            raise ValueError(
                f"edge_features must have shape ({num_pairs(nodes.shape[0])}, "
                f"{nodes.shape[1]}), got {edges.shape}")
        if not 0 <= self.global_index < nodes.shape[0]:
            raise ValueError("global_index out of range")

    @property
    def num_views(self) -> int:
        return self.node_features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.node_features.shape[1]

    @property
    def local_indices(self) -> list[int]:
        return [i for i in range(self.num_views) if i != self.global_index]

    def edge_feature(self, i: int, j: int) -> np.ndarray:
        return self.edge_features[pair_index(i, j, self.num_views)]

    def edge_weights(self) -> np.ndarray:
        """L2 norm per canonical pair."""
        return np.sqrt(np.square(self.edge_features).sum(axis=1))

    def weight_matrix(self) -> np.ndarray:
        """Symmetric (N, N) matrix of edge weights with zero diagonal."""
        n = self.num_views
        w = np.zeros((n, n))
        flat = self.edge_weights()
        for r, (i, j) in enumerate(pair_list(n)):
            w[i, j] = flat[r]
            w[j, i] = flat[r]
        return w


def edge_weight(g: ViewGraph, i: int, j: int) -> float:
    """L2 norm of the (i, j) edge feature; symmetric in (i, j)."""
    if i == j:
        raise ValueError("no self-edges: i == j")
    n = g.num_views
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"node index out of range for {n} nodes")
    return float(np.linalg.norm(g.edge_feature(i, j)))


def induced_subgraph(g: ViewGraph, nodes) -> ViewGraph:
    """Complete subgraph over `nodes`, reindexed in ascending original order.

    The global view must be part of the subset; it keeps index 0 in the
    result because node 0 sorts first.
    """
    subset = sorted(set(int(v) for v in nodes))
    if not subset:
        raise ValueError("node subset must be non-empty")
    if subset[0] < 0 or subset[-1] >= g.num_views:
        raise IndexError("node subset out of range")
    if g.global_index not in subset:
        raise ValueError("node subset must contain the global view")
    node_feats = g.node_features[subset].copy()
    m = len(subset)
    edge_feats = np.empty((num_pairs(m), g.feature_dim))
    for r, (a, b) in enumerate(pair_list(m)):
        edge_feats[r] = g.edge_feature(subset[a], subset[b])
    return ViewGraph(node_feats, edge_feats,
                     global_index=subset.index(g.global_index), label=g.label)


def export_dot(g: ViewGraph, weights_as_labels: bool = False) -> str:
    """Render as DOT text; deterministic node order, LF endings."""
    lines = ["graph view_graph {"]
    for i in range(g.num_views):
        if i == g.global_index:
            lines.append(f'  v{i} [shape=doublecircle, label="g"];')
        else:
            lines.append(f'  v{i} [shape=circle, label="{i}"];')
    for i, j in pair_list(g.num_views):
        if weights_as_labels:
            lines.append(f'  v{i} -- v{j} [label="{edge_weight(g, i, j):.3f}"];')
        else:
            lines.append(f"  v{i} -- v{j};")
    lines.append("}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ExplanationSubgraph:
    """A node subset of a parent graph used as an explanation."""

    parent: ViewGraph
    node_subset: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        subset = frozenset(int(v) for v in self.node_subset)
        object.__setattr__(self, "node_subset", subset)
        if not subset:
            raise ValueError("explanation must contain at least one node")
        if any(v < 0 or v >= self.parent.num_views for v in subset):
            raise IndexError("explanation node out of range")
        if self.parent.global_index not in subset:
            raise ValueError("explanation must contain the global view")

    def as_graph(self) -> ViewGraph:
        return induced_subgraph(self.parent, self.node_subset)

    @property
    def size(self) -> int:
        return len(self.node_subset)
