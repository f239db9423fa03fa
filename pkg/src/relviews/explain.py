"""Explanation-quality metrics: fidelity, sparsity, and clique similarity.

Fidelity keeps the paper-style sign: distance of the kept subgraph to the
class proxy minus distance of the full graph (larger when pruning moves the
instance away from its proxy). Sparsity is the kept fraction's complement.
mACS compares two explainers by how many k-cliques containing the global
view their explanation graphs produce per class.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import ExplanationSubgraph, ViewGraph
from .hed import hed
from .proxies import ProxyGraph
from .transitivity import TransitivityConfig, count_k_cliques_with_global, emergence_score


@dataclass(frozen=True)
class ExplanationSet:
    """One explanation per instance plus the proxies they are scored against."""
    entries: tuple[ExplanationSubgraph, ...]
    proxies: dict[int, ProxyGraph]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        for ex in self.entries:
            if ex.parent.label is None:
                raise ValueError("explanation parents must carry class labels")
            if ex.parent.label not in self.proxies:
                raise ValueError(f"no proxy for class {ex.parent.label}")

    def __len__(self) -> int:
        return len(self.entries)


def top_k_explanation(graph: ViewGraph, top_k: int) -> ExplanationSubgraph:
    """The global view plus the top_k locals by emergence; ties by node index."""
    locals_ = graph.local_indices
    ranked = sorted(locals_, key=lambda v: (-emergence_score(graph, v), v))
    keep = ranked[:min(top_k, len(ranked))]
    return ExplanationSubgraph(graph, frozenset(keep) | {graph.global_index})


def random_explanation(graph: ViewGraph, size: int, rng: np.random.Generator
                       ) -> ExplanationSubgraph:
    locals_ = graph.local_indices
    keep = rng.permutation(locals_)[:min(size, len(locals_))]
    return ExplanationSubgraph(graph, frozenset(int(v) for v in keep) | {graph.global_index})


def fidelity(expls: ExplanationSet, head) -> float:
    """Mean of h(kept subgraph, proxy) - h(full graph, proxy)."""
    if len(expls) == 0:
        raise ValueError("explanation set is empty")
    vals = []
    for ex in expls.entries:
        proxy = expls.proxies[ex.parent.label].as_view_graph()
        vals.append(hed(ex.as_graph(), proxy, head).value
                    - hed(ex.parent, proxy, head).value)
    return float(np.mean(vals))


def sparsity(expls: ExplanationSet) -> float:
    """Mean of 1 - |kept nodes| / |all nodes|."""
    if len(expls) == 0:
        raise ValueError("explanation set is empty")
    return float(np.mean([1.0 - ex.size / ex.parent.num_views for ex in expls.entries]))


def fidelity_sparsity_curve(graphs: list[ViewGraph], proxies: dict[int, ProxyGraph],
                            head, top_k_list) -> list[tuple[int, float, float]]:
    """(top_k, sparsity, fidelity) per requested explanation size."""
    rows = []
    for k in top_k_list:
        expls = ExplanationSet(tuple(top_k_explanation(g, k) for g in graphs), proxies)
        rows.append((int(k), sparsity(expls), fidelity(expls, head)))
    return rows


def curve_csv(rows: list[tuple[int, float, float]]) -> str:
    lines = ["k,sparsity,fidelity"]
    lines += [f"{k},{s:.6f},{f:.6f}" for k, s, f in rows]
    return "\n".join(lines) + "\n"


def macs_at_k(expls_a: ExplanationSet, expls_b: ExplanationSet, k: int,
              cfg: TransitivityConfig) -> float:
    """Mean average clique similarity between two explanation sets.

    Per class, the average count of k-cliques containing the global view is
    compared via a relative difference (defined as 0 when both are 0); the
    similarity is one minus the class-mean difference. The clique threshold
    is resolved per explanation graph from its own edge weights.
    """
    if len(expls_a) != len(expls_b):
        raise ValueError("explanation sets must cover the same instances")
    labels_a = [ex.parent.label for ex in expls_a.entries]
    labels_b = [ex.parent.label for ex in expls_b.entries]
    if labels_a != labels_b:
        raise ValueError("explanation sets must cover the same instances")

    def class_counts(expls: ExplanationSet) -> dict[int, float]:
        per_class: dict[int, list[int]] = {}
        for ex in expls.entries:
            sub = ex.as_graph()
            gamma = cfg.resolve(sub.edge_weights())
            per_class.setdefault(ex.parent.label, []).append(
                count_k_cliques_with_global(sub, k, gamma))
        return {c: float(np.mean(v)) for c, v in per_class.items()}

    acc_a = class_counts(expls_a)
    acc_b = class_counts(expls_b)
    diffs = []
    for c in sorted(acc_a):
        hi = max(acc_a[c], acc_b[c])
        diffs.append(0.0 if hi == 0 else abs(acc_a[c] - acc_b[c]) / hi)
    return 1.0 - float(np.mean(diffs))


def macs_csv(rows: list[tuple[int, float]]) -> str:
    lines = ["k,macs"]
    lines += [f"{k},{m:.6f}" for k, m in rows]
    return "\n".join(lines) + "\n"
