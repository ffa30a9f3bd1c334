"""
Graph container, Laplacians and Rayleigh quotients.

The sampler works on a scalar signal per node; `composite_feature` turns a
feature matrix into that signal. Rayleigh quotients are returned as
`Fraction` pairs so that zero-energy signals never require a division.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DomainError

UNLABELED = -1


@functools.total_ordering
@dataclass(frozen=True, eq=False)
class Fraction:
    """Non-negative ratio ``num / den`` compared by cross-multiplication.

    ``den == 0`` with ``num > 0`` is +inf; ``0 / 0`` compares as 0. Entries
    may be floats or `fractions.Fraction` for exact arithmetic.
    """

    num: object
    den: object

    def __post_init__(self):
        if self.num < 0 or self.den < 0:
            raise DomainError(f"negative fraction entries ({self.num}, {self.den})")

    @property
    def is_inf(self) -> bool:
        return self.den == 0 and self.num > 0

    def _cmp(self, other: "Fraction") -> int:
        si, oi = self.is_inf, other.is_inf
        if si or oi:
            return int(si) - int(oi)
        a, b = (self.num, self.den) if self.den != 0 else (0, 1)
        c, d = (other.num, other.den) if other.den != 0 else (0, 1)
        lhs, rhs = a * d, c * b
        return (lhs > rhs) - (lhs < rhs)

    def __eq__(self, other):
        if not isinstance(other, Fraction):
            return NotImplemented
        return self._cmp(other) == 0

    def __lt__(self, other):
        if not isinstance(other, Fraction):
            return NotImplemented
        return self._cmp(other) < 0

    __hash__ = None

    def value(self) -> float:
        if self.is_inf:
            return float("inf")
        if self.den == 0:
            return 0.0
        return float(self.num / self.den)

    def __float__(self):
        return self.value()

    def __repr__(self):
        return f"Fraction({self.num!r}/{self.den!r})"


def _edge_key(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable undirected simple graph in CSR form.

    Use `Graph.from_edges` to build one; it validates the edge list and
    symmetrizes the adjacency.
    """

    node_count: int
    indptr: np.ndarray
    indices: np.ndarray
    features: np.ndarray
    node_labels: np.ndarray | None = None
    edge_labels: Mapping[tuple[int, int], int] | None = None
    graph_label: int | None = None
    edges: np.ndarray = field(default=None, repr=False)

    @classmethod
    def from_edges(
        cls,
        node_count: int,
        edges: Iterable[Sequence[int]],
        features=None,
        node_labels=None,
        edge_labels: Mapping[tuple[int, int], int] | None = None,
        graph_label: int | None = None,
    ) -> "Graph":
        n = int(node_count)
        if n < 0:
            raise DomainError("node_count must be non-negative")
        seen = set()
        for e in edges:
            u, v = int(e[0]), int(e[1])
            if not (0 <= u < n and 0 <= v < n):
                raise DomainError(f"edge ({u}, {v}) out of range for {n} nodes")
            if u == v:
                raise DomainError(f"self-loop at node {u}")
            key = _edge_key(u, v)
            if key in seen:
                raise DomainError(f"duplicate edge {key}")
            seen.add(key)
        edge_arr = np.array(sorted(seen), dtype=np.int64).reshape(-1, 2)

        rows = np.concatenate([edge_arr[:, 0], edge_arr[:, 1]])
        cols = np.concatenate([edge_arr[:, 1], edge_arr[:, 0]])
        order = np.lexsort((cols, rows))
        rows, cols = rows[order], cols[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, rows + 1, 1)
        indptr = np.cumsum(indptr)

        if features is None:
            feats = np.ones((n, 1))
        else:
            feats = np.asarray(features, dtype=np.float64)
            if feats.ndim == 1:
                feats = feats[:, None]
            if feats.shape[0] != n:
                raise DomainError(f"features have {feats.shape[0]} rows, expected {n}")
        feats = feats.copy()
        feats.setflags(write=False)

        labels = None
        if node_labels is not None:
            labels = np.asarray(node_labels, dtype=np.int64).copy()
            if labels.shape != (n,):
                raise DomainError("node_labels length must equal node_count")
            if not np.isin(labels, (0, 1, UNLABELED)).all():
                raise DomainError("node labels must be 0, 1 or unlabeled (-1)")
            labels.setflags(write=False)

        elabels = None
        if edge_labels is not None:
            elabels = {}
            for (u, v), lab in edge_labels.items():
                key = _edge_key(int(u), int(v))
                if key not in seen:
                    raise DomainError(f"labeled edge {key} is not in the graph")
                if lab not in (0, 1, UNLABELED):
                    raise DomainError(f"edge label {lab!r} for {key}")
                elabels[key] = int(lab)

        if graph_label is not None and graph_label not in (0, 1):
            raise DomainError("graph_label must be 0 or 1")

        for arr in (indptr, cols, edge_arr):
            arr.setflags(write=False)
        return cls(n, indptr, cols, feats, labels, elabels, graph_label, edge_arr)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @property
    def feat_dim(self) -> int:
        return self.features.shape[1]

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def has_edge(self, u: int, v: int) -> bool:
        nb = self.neighbors(u)
        i = np.searchsorted(nb, v)
        return bool(i < len(nb) and nb[i] == v)

    def adjacency(self) -> sp.csr_matrix:
        data = np.ones(len(self.indices))
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.node_count,) * 2)

    def edge_label_array(self) -> np.ndarray:
        """Edge labels aligned with `edges`, unlabeled edges as -1."""
        out = np.full(self.edge_count, UNLABELED, dtype=np.int64)
        if self.edge_labels:
            for i, (u, v) in enumerate(self.edges.tolist()):
                out[i] = self.edge_labels.get((u, v), UNLABELED)
        return out

    def subgraph_without(self, dropped: Iterable[tuple[int, int]]) -> "Graph":
        """Same nodes, features and labels, minus the `dropped` edges."""
        drop = {_edge_key(int(u), int(v)) for u, v in dropped}
        kept = [tuple(e) for e in self.edges.tolist() if tuple(e) not in drop]
        elabels = None
        if self.edge_labels is not None:
            elabels = {k: v for k, v in self.edge_labels.items() if k not in drop}
        return Graph.from_edges(self.node_count, kept, self.features, self.node_labels,
                                elabels, self.graph_label)


def disjoint_union(graphs: Sequence[Graph]) -> tuple[Graph, np.ndarray]:
    """Block-diagonal union; returns the graph and node offsets (len+1)."""
    offsets = np.zeros(len(graphs) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([g.node_count for g in graphs])
    edges, feats, labels, elabels = [], [], [], {}
    any_labels = any(g.node_labels is not None for g in graphs)
    for g, off in zip(graphs, offsets[:-1]):
        edges.append(g.edges + off)
        feats.append(g.features)
        if any_labels:
            labels.append(g.node_labels if g.node_labels is not None
                          else np.full(g.node_count, UNLABELED))
        for (u, v), lab in (g.edge_labels or {}).items():
            elabels[(u + off, v + off)] = lab
    edge_arr = np.concatenate(edges) if edges else np.zeros((0, 2), dtype=np.int64)
    union = Graph.from_edges(
        int(offsets[-1]), edge_arr.tolist(),
        np.concatenate(feats) if feats else np.zeros((0, 1)),
        np.concatenate(labels) if any_labels else None,
        elabels or None,
    )
    return union, offsets


def _as_values(signal) -> list:
    if isinstance(signal, list):
        return signal
    if isinstance(signal, np.ndarray):
        return signal.tolist()
    return list(signal)


def rayleigh_quotient(signal, graph: Graph, nodes: Iterable[int]) -> Fraction:
    """Rayleigh quotient of `signal` on the subgraph induced by `nodes`.

    Returns ``(sum over induced edges (x_i - x_j)^2, sum x_i^2)``; each
    undirected edge is counted once.
    """
    node_set = set(int(v) for v in nodes)
    if not node_set:
        raise DomainError("rayleigh_quotient needs a non-empty node set")
    x = _as_values(signal)
    num = 0 * x[0]
    den = 0 * x[0]
    for u in sorted(node_set):
        if not 0 <= u < graph.node_count:
            raise DomainError(f"node {u} not in graph")
        xu = x[u]
        den += xu * xu
        for v in graph.neighbors(u).tolist():
            if v > u and v in node_set:
                d = xu - x[v]
                num += d * d
    return Fraction(num, den)


def laplacian_dense(graph: Graph, normalized: bool = False,
                    weights: Mapping[tuple[int, int], float] | None = None) -> np.ndarray:
    """Dense ``D - A`` or ``I - D^-1/2 A D^-1/2``.

    `weights` optionally maps edges to positive weights (oracle use only).
    Isolated nodes get a zero normalization term in the normalized form.
    """
    n = graph.node_count
    if n > 10_000:
        raise DomainError("laplacian_dense is capped at 10^4 nodes")
    A = np.zeros((n, n))
    for u, v in graph.edges.tolist():
        w = 1.0 if weights is None else float(weights[_edge_key(u, v)])
        A[u, v] = A[v, u] = w
    deg = A.sum(axis=1)
    if not normalized:
        return np.diag(deg) - A
    inv_sqrt = np.zeros(n)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    L = np.eye(n) - inv_sqrt[:, None] * A * inv_sqrt[None, :]
    # isolated nodes have no normalization term
    L[~nz, ~nz] = 0.0
    return L


def composite_feature(features) -> np.ndarray:
    """Per-node scalar: min-max scale each column to [0, 1], then L1 norm.

    Constant columns map to 0.
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] < 1:
        raise DomainError("composite_feature needs at least one feature column")
    lo = X.min(axis=0)
    span = X.max(axis=0) - lo
    scaled = np.zeros_like(X)
    ok = span > 0
    scaled[:, ok] = (X[:, ok] - lo[ok]) / span[ok]
    return np.abs(scaled).sum(axis=1)
