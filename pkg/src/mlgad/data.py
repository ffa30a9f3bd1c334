"""Synthetic multi-level anomaly datasets and stratified splitting."""
from __future__ import annotations

from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .errors import ConfigError, DomainError
from .graph_core import UNLABELED, Graph, disjoint_union

PARTS = ("train", "val", "test")


@dataclass
class Dataset:
    """One big graph ("single") or a collection of small graphs ("multi").

    ``split[level][part]`` holds target indices: node ids for "node"
    (global ids in the disjoint union for multi-graph data), row indices
    into ``union.edges`` for "edge", graph indices for "graph".
    """

    kind: str
    graphs: list[Graph]
    seed: int = 0
    split: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)
    node_part: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("single", "multi"):
            raise DomainError(f"unknown dataset kind {self.kind!r}")
        if self.kind == "single":
            if len(self.graphs) != 1:
                raise DomainError("single-graph datasets hold exactly one graph")
            if self.graphs[0].graph_label is not None:
                raise DomainError("single-graph datasets carry no graph label")
        self.union, self.offsets = disjoint_union(self.graphs)
        self.graph_of_node = np.repeat(np.arange(len(self.graphs)),
                                       np.diff(self.offsets)).astype(np.int64)

    def labels(self, level: str) -> np.ndarray:
        if level == "node":
            if self.union.node_labels is None:
                return np.full(self.union.node_count, UNLABELED)
            return np.asarray(self.union.node_labels)
        if level == "edge":
            return self.union.edge_label_array()
        if level == "graph":
            return np.array([UNLABELED if g.graph_label is None else g.graph_label
                             for g in self.graphs], dtype=np.int64)
        raise ConfigError(f"unknown level {level!r}")

    def label_mask(self) -> dict[str, bool]:
        """Which levels carry any labels at all."""
        return {lvl: bool((self.labels(lvl) != UNLABELED).any())
                for lvl in ("node", "edge", "graph")}


def edge_labels_from_nodes(graph: Graph, node_probs, mode: str = "threshold",
                           threshold: float = 0.5, seed: int = 0):
    """Edge anomaly probabilities as the mean of endpoint probabilities.

    Returns ``(probs, labels)`` aligned with ``graph.edges``. ``threshold``
    mode labels an edge anomalous when its probability is >= `threshold`;
    ``bernoulli`` mode draws labels with a seeded generator.
    """
    p = np.asarray(node_probs, dtype=np.float64)
    if p.shape != (graph.node_count,) or (p < 0).any() or (p > 1).any():
        raise DomainError("node_probs must be one probability in [0, 1] per node")
    if graph.edge_count == 0:
        return np.zeros(0), np.zeros(0, dtype=np.int64)
    probs = 0.5 * (p[graph.edges[:, 0]] + p[graph.edges[:, 1]])
    if mode == "threshold":
        labels = (probs >= threshold).astype(np.int64)
        labels[probs == 0] = 0
    elif mode == "bernoulli":
        labels = (np.random.default_rng(seed).random(len(probs)) < probs).astype(np.int64)
    else:
        raise ConfigError(f"unknown edge label mode {mode!r}")
    return probs, labels


def synth_single_graph(n: int = 1000, anomaly_rate: float = 0.05, mode: str = "contextual",
                       seed: int = 0, feat_dim: int = 8, attach: int = 3,
                       shift: float = 3.0, clique_size: int = 6,
                       edge_mode: str = "threshold") -> Dataset:
    """Preferential-attachment graph with injected node anomalies.

    Contextual anomalies get features drawn around `shift` instead of 0;
    structural anomalies are wired into dense cliques. Node anomaly
    probabilities (high for anomalies, low otherwise) give the edge labels.
    """
    if n < 50:
        raise DomainError("n must be >= 50")
    if not 0.0 <= anomaly_rate < 0.5:
        raise DomainError("anomaly_rate must lie in [0, 0.5)")
    if mode not in ("contextual", "structural", "mixed"):
        raise DomainError(f"unknown anomaly mode {mode!r}")
    rng = np.random.default_rng(seed)
    backbone = nx.barabasi_albert_graph(n, attach, seed=int(rng.integers(2**31)))
    edges = {(min(u, v), max(u, v)) for u, v in backbone.edges()}
    X = rng.normal(0.0, 1.0, size=(n, feat_dim))
    labels = np.zeros(n, dtype=np.int64)

    k = int(round(anomaly_rate * n))
    anomalies = rng.choice(n, size=k, replace=False) if k else np.zeros(0, dtype=np.int64)
    if mode == "contextual":
        ctx, struct = anomalies, anomalies[:0]
    elif mode == "structural":
        ctx, struct = anomalies[:0], anomalies
    else:
        ctx, struct = anomalies[: k // 2], anomalies[k // 2:]
    if len(ctx):
        X[ctx] = rng.normal(shift, 1.0, size=(len(ctx), feat_dim))
    for start in range(0, len(struct), clique_size):
        group = sorted(struct[start:start + clique_size].tolist())
        for i, u in enumerate(group):
            for v in group[i + 1:]:
                edges.add((u, v))
    labels[anomalies] = 1

    probs = np.where(labels == 1, rng.uniform(0.7, 1.0, n), rng.uniform(0.0, 0.3, n))
    g = Graph.from_edges(n, sorted(edges), X, labels)
    _, elab = edge_labels_from_nodes(g, probs, edge_mode, seed=seed)
    elabels = {tuple(e): int(lab) for e, lab in zip(g.edges.tolist(), elab.tolist())}
    g = Graph.from_edges(n, g.edges.tolist(), X, labels, elabels)
    return Dataset("single", [g], seed=seed)


def _normal_graph(rng: np.random.Generator, n: int) -> set[tuple[int, int]]:
    if rng.random() < 0.5:
        # random recursive tree
        return {(int(rng.integers(i)), i) for i in range(1, n)}
    edges = {(i, i + 1) for i in range(n - 1)} | {(0, n - 1)}
    for _ in range(max(1, n // 10)):
        u, v = sorted(rng.choice(n, size=2, replace=False).tolist())
        if v - u > 1 and (u, v) != (0, n - 1):
            edges.add((u, v))
    return edges


def synth_multi_graph(num_graphs: int = 200, nodes_per_graph=(30, 60),
                      graph_anomaly_rate: float = 0.2, seed: int = 0, feat_dim: int = 4,
                      motif_size=(5, 8), shift: float = 1.0,
                      spread: float = 1.0) -> Dataset:
    """Trees and rings; anomalous graphs additionally embed a dense motif.

    Motif nodes form a clique, carry shifted features and are labeled
    anomalous; graphs holding a motif are labeled anomalous.
    """
    if num_graphs < 20:
        raise DomainError("num_graphs must be >= 20")
    lo, hi = (nodes_per_graph, nodes_per_graph) if np.isscalar(nodes_per_graph) else nodes_per_graph
    if lo < motif_size[1] + 2 or hi < lo:
        raise DomainError("invalid nodes_per_graph range")
    if not 0.0 <= graph_anomaly_rate < 1.0:
        raise DomainError("graph_anomaly_rate must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    n_anom = int(round(graph_anomaly_rate * num_graphs))
    anomalous = np.zeros(num_graphs, dtype=bool)
    anomalous[rng.choice(num_graphs, size=n_anom, replace=False)] = True

    graphs = []
    for gi in range(num_graphs):
        n = int(rng.integers(lo, hi + 1))
        X = rng.normal(0.0, 1.0, size=(n, feat_dim))
        labels = np.zeros(n, dtype=np.int64)
        if anomalous[gi]:
            m = int(rng.integers(motif_size[0], motif_size[1] + 1))
            base = n - m
            edges = _normal_graph(rng, base)
            motif = list(range(base, n))
            for i, u in enumerate(motif):
                for v in motif[i + 1:]:
                    edges.add((u, v))
                edges.add((int(rng.integers(base)), u))
            X[motif] = rng.normal(shift, spread, size=(m, feat_dim))
            labels[motif] = 1
        else:
            edges = _normal_graph(rng, n)
        graphs.append(Graph.from_edges(n, sorted(edges), X, labels,
                                       graph_label=int(anomalous[gi])))
    return Dataset("multi", graphs, seed=seed)


def _stratified(indices: np.ndarray, labels: np.ndarray, train_frac: float,
                rng: np.random.Generator) -> dict[str, np.ndarray]:
    parts = {p: [] for p in PARTS}
    for cls in np.unique(labels):
        members = rng.permutation(indices[labels == cls])
        n_train = int(round(train_frac * len(members)))
        rest = members[n_train:]
        n_val = len(rest) // 2
        parts["train"].append(members[:n_train])
        parts["val"].append(rest[:n_val])
        parts["test"].append(rest[n_val:])
    return {p: np.sort(np.concatenate(v)) if v else np.zeros(0, dtype=np.int64)
            for p, v in parts.items()}


def _has_both(labels: np.ndarray, idx: np.ndarray) -> bool:
    lab = labels[idx]
    lab = lab[lab != UNLABELED]
    return len(np.unique(lab)) == 2


def split(dataset: Dataset, train_frac: float = 0.4, seed: int = 0,
          max_attempts: int = 10) -> Dataset:
    """Assign every labeled target to train / val / test.

    Single graph: nodes are stratified by label; an edge belongs to a
    partition only when both endpoints do, so cross-partition edges are
    never targets. Multi graph: whole graphs are stratified by graph label
    and their nodes follow them. The remainder after train is halved into
    val and test. Retries with the next seed if a labeled level would lack
    a class in train.
    """
    if not 0.0 < train_frac < 1.0:
        raise ConfigError("train_frac must lie in (0, 1)")
    avail = dataset.label_mask()
    for attempt in range(max_attempts):
        rng = np.random.default_rng(seed + attempt)
        out: dict[str, dict[str, np.ndarray]] = {}
        if dataset.kind == "single":
            y = dataset.labels("node")
            nodes = np.arange(len(y))
            strat = np.where(y == UNLABELED, 2, y)
            node_split = _stratified(nodes, strat, train_frac, rng)
            part = np.full(len(y), -1, dtype=np.int64)
            for i, p in enumerate(PARTS):
                part[node_split[p]] = i
            out["node"] = {p: v[y[v] != UNLABELED] for p, v in node_split.items()}
            e = dataset.union.edges
            same = part[e[:, 0]] == part[e[:, 1]]
            ey = dataset.labels("edge")
            out["edge"] = {p: np.flatnonzero(same & (part[e[:, 0]] == i) & (ey != UNLABELED))
                           for i, p in enumerate(PARTS)}
            out["graph"] = {p: np.zeros(0, dtype=np.int64) for p in PARTS}
        else:
            gy = dataset.labels("graph")
            if avail["graph"]:
                strat = np.where(gy == UNLABELED, 2, gy)
            else:
                ny = dataset.labels("node")
                strat = np.array([int((ny[dataset.graph_of_node == g] == 1).any())
                                  for g in range(len(dataset.graphs))])
            graph_split = _stratified(np.arange(len(gy)), strat, train_frac, rng)
            out["graph"] = {p: v[gy[v] != UNLABELED] for p, v in graph_split.items()}
            part = np.full(dataset.union.node_count, -1, dtype=np.int64)
            for i, p in enumerate(PARTS):
                part[np.isin(dataset.graph_of_node, graph_split[p])] = i
            ny = dataset.labels("node")
            out["node"] = {p: np.flatnonzero((part == i) & (ny != UNLABELED))
                           for i, p in enumerate(PARTS)}
            e = dataset.union.edges
            ey = dataset.labels("edge")
            out["edge"] = {p: np.flatnonzero((part[e[:, 0]] == i) & (ey != UNLABELED))
                           for i, p in enumerate(PARTS)}
        ok = all(_has_both(dataset.labels(lvl), out[lvl]["train"])
                 for lvl, has in avail.items() if has)
        if ok:
            return Dataset(dataset.kind, dataset.graphs, dataset.seed, out, part)
    raise DomainError(f"no split with both classes in train after {max_attempts} attempts")


def leakage_free_graph(dataset: Dataset) -> Graph:
    """Union graph with every edge between different partitions removed."""
    if dataset.node_part is None:
        raise DomainError("dataset has not been split")
    e = dataset.union.edges
    cross = dataset.node_part[e[:, 0]] != dataset.node_part[e[:, 1]]
    if not cross.any():
        return dataset.union
    return dataset.union.subgraph_without(e[cross].tolist())
