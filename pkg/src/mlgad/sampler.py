"""
Maximum Rayleigh quotient subtree sampling.

For a target node (or edge) we build the BFS spanning tree of its k-hop
neighbourhood and return the connected, root-containing subtree whose
Rayleigh quotient over tree edges is largest. The search is a two-stage
tree DP:

1. `get_max_deltas` computes, bottom-up, for every non-root node ``v`` the
   best ratio ``(a_v, b_v)`` reachable by a connected set containing ``v``
   inside its own subtree, where ``a_v`` includes the edge to ``v``'s parent.
   Children are absorbed greedily from a priority queue while they raise the
   ratio; absorbing a child re-activates the candidates it had rejected.
2. `mrq_sample_node` / `mrq_sample_edge` run the same greedy loop from the
   root state ``(0, x_r^2)`` (or the edge's own energy for edge targets).

`brute_force_max_rq` enumerates every root-containing subtree and is the
independent check for the DP. Signals may hold `fractions.Fraction` values,
in which case every comparison is exact.
"""
from __future__ import annotations

import heapq
import itertools
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction as PyFraction
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DomainError
from .graph_core import Fraction, Graph, _as_values


@dataclass
class RootedTree:
    roots: tuple[int, ...]
    parent: dict[int, int]
    depth_cap: int
    hop: dict[int, int]
    children: dict[int, list[int]]
    order: list[int] = field(default_factory=list)

    @property
    def nodes(self) -> list[int]:
        return self.order

    def __len__(self):
        return len(self.order)


@dataclass
class DeltaRecord:
    node: int
    a: object
    b: object
    selected: list[int]
    inferior: list["DeltaRecord"]

    @property
    def delta(self) -> Fraction:
        return Fraction(self.a, self.b)


@dataclass
class SampledSubgraph:
    roots: tuple[int, ...]
    nodes: tuple[int, ...]
    rq: Fraction
    hops: dict[int, int]
    pool_weights: dict[int, float] = field(default_factory=dict)


def build_rooted_tree(graph: Graph, roots: Sequence[int], depth: int) -> RootedTree:
    """Multi-source BFS tree of the ``depth``-hop neighbourhood of `roots`.

    A node reachable from several frontier nodes is claimed by the one with
    the lowest id; child lists come out sorted ascending.
    """
    roots = tuple(int(r) for r in roots)
    if len(roots) not in (1, 2) or len(set(roots)) != len(roots):
        raise DomainError("a rooted tree needs one node or the two endpoints of an edge")
    for r in roots:
        if not 0 <= r < graph.node_count:
            raise DomainError(f"root {r} not in graph")
    if len(roots) == 2 and not graph.has_edge(*roots):
        raise DomainError(f"roots {roots} are not adjacent")
    if depth < 1:
        raise DomainError("depth must be >= 1")

    parent: dict[int, int] = {}
    hop = {r: 0 for r in roots}
    children: dict[int, list[int]] = {r: [] for r in roots}
    order = sorted(roots)
    frontier = sorted(roots)
    indptr, indices = graph.indptr, graph.indices
    for level in range(1, depth + 1):
        nxt = []
        for u in frontier:
            for v in indices[indptr[u]:indptr[u + 1]].tolist():
                if v not in hop:
                    hop[v] = level
                    parent[v] = u
                    children[u].append(v)
                    children[v] = []
                    nxt.append(v)
        if not nxt:
            break
        nxt.sort()
        order.extend(nxt)
        frontier = nxt
    return RootedTree(roots, parent, depth, hop, children, order)


class _Candidate:
    """Heap entry: larger delta first, then lower node id."""

    __slots__ = ("rec", "frac")

    def __init__(self, rec: DeltaRecord):
        self.rec = rec
        self.frac = Fraction(rec.a, rec.b)

    def __lt__(self, other: "_Candidate") -> bool:
        c = self.frac._cmp(other.frac)
        if c != 0:
            return c > 0
        return self.rec.node < other.rec.node


def _absorb(a, b, records: Iterable[DeltaRecord], selected: list[int], trace=None):
    """Greedy merge loop shared by both stages.

    Returns the final ``(a, b)`` and the records left in the queue.
    """
    heap = [_Candidate(r) for r in records]
    heapq.heapify(heap)
    current = Fraction(a, b)
    while heap:
        top = heap[0]
        na, nb = a + top.rec.a, b + top.rec.b
        merged = Fraction(na, nb)
        # strict: zero-gain candidates stay out
        if not merged > current:
            break
        heapq.heappop(heap)
        a, b, current = na, nb, merged
        selected.extend(top.rec.selected)
        for r in top.rec.inferior:
            heapq.heappush(heap, _Candidate(r))
        if trace is not None:
            trace.append(current)
    return a, b, [c.rec for c in heap]


def get_max_deltas(tree: RootedTree, signal, v: int, parent: int, _x=None) -> DeltaRecord:
    """Stage-1 record for the subtree rooted at non-root node `v`."""
    x = _as_values(signal) if _x is None else _x
    if tree.parent.get(v) != parent:
        raise DomainError(f"{parent} is not the tree parent of {v}")
    d = x[v] - x[parent]
    a, b = d * d, x[v] * x[v]
    child_recs = [get_max_deltas(tree, signal, c, v, x) for c in tree.children[v]]
    selected = [v]
    a, b, rest = _absorb(a, b, child_recs, selected)
    return DeltaRecord(v, a, b, selected, rest)


def pooling_weights(subgraph: SampledSubgraph, decay: float) -> dict[int, float]:
    """Weights proportional to ``decay ** hop``, normalized to sum to one."""
    if not 0.0 < decay <= 1.0:
        raise ConfigError(f"decay must lie in (0, 1], got {decay}")
    if not subgraph.nodes:
        raise DomainError("empty subgraph")
    raw = np.array([decay ** subgraph.hops[v] for v in subgraph.nodes])
    raw /= raw.sum()
    return dict(zip(subgraph.nodes, raw.tolist()))


def _finish(tree: RootedTree, roots, a, b, selected, decay) -> SampledSubgraph:
    nodes = tuple(sorted(selected))
    sub = SampledSubgraph(tuple(roots), nodes, Fraction(a, b), {v: tree.hop[v] for v in nodes})
    sub.pool_weights = pooling_weights(sub, decay)
    return sub


def mrq_sample_node(graph: Graph, signal, target: int, depth: int = 2,
                    decay: float = 0.5, trace: list | None = None) -> SampledSubgraph:
    """Max-RQ connected subtree containing `target` within its depth-capped BFS tree.

    If `trace` is a list, the quotient after every accepted merge is appended.
    """
    tree = build_rooted_tree(graph, [target], depth)
    x = _as_values(signal)
    recs = [get_max_deltas(tree, signal, c, target, x) for c in tree.children[target]]
    selected = [target]
    a, b, _ = _absorb(0 * x[target], x[target] * x[target], recs, selected, trace)
    return _finish(tree, (target,), a, b, selected, decay)


def mrq_sample_edge(graph: Graph, signal, edge: Sequence[int], depth: int = 2,
                    decay: float = 0.5, trace: list | None = None) -> SampledSubgraph:
    """Max-RQ connected subtree containing both endpoints of `edge`.

    The start state already holds both endpoints and the edge's own energy;
    candidates are the subtrees hanging off either endpoint in the two-root
    BFS tree.
    """
    u, v = int(edge[0]), int(edge[1])
    if u == v or not (0 <= u < graph.node_count and 0 <= v < graph.node_count) \
            or not graph.has_edge(u, v):
        raise DomainError(f"({u}, {v}) is not an edge of the graph")
    tree = build_rooted_tree(graph, [u, v], depth)
    x = _as_values(signal)
    recs = [get_max_deltas(tree, signal, c, r, x) for r in (u, v) for c in tree.children[r]]
    selected = [u, v]
    d = x[u] - x[v]
    a, b, _ = _absorb(d * d, x[u] * x[u] + x[v] * x[v], recs, selected, trace)
    return _finish(tree, (u, v), a, b, selected, decay)


def tree_rq(tree: RootedTree, signal, nodes: Iterable[int]) -> Fraction:
    """Rayleigh quotient of `nodes` counting tree edges only.

    For an edge-rooted tree the edge between the two roots counts too.
    """
    x = _as_values(signal)
    nodes = sorted(set(nodes))
    node_set = set(nodes)
    num = 0 * x[nodes[0]]
    den = 0 * x[nodes[0]]
    for v in nodes:
        den += x[v] * x[v]
        p = tree.parent.get(v)
        if p is not None and p in node_set:
            d = x[v] - x[p]
            num += d * d
    if len(tree.roots) == 2 and all(r in node_set for r in tree.roots):
        d = x[tree.roots[0]] - x[tree.roots[1]]
        num += d * d
    return Fraction(num, den)


BRUTE_FORCE_CAP = 20


def _closed_sets(tree: RootedTree, v: int):
    """Every connected subset of v's subtree that contains v."""
    options = []
    for c in tree.children[v]:
        options.append([()] + list(_closed_sets(tree, c)))
    for combo in itertools.product(*options):
        out = [v]
        for part in combo:
            out.extend(part)
        yield tuple(out)


def brute_force_max_rq(tree: RootedTree, signal) -> tuple[Fraction, tuple[int, ...]]:
    """Exhaustive max over every connected subtree containing all roots.

    Returns the best quotient and the lexicographically smallest node set
    achieving it.
    """
    if len(tree) > BRUTE_FORCE_CAP:
        raise DomainError(f"brute force refused: {len(tree)} nodes > {BRUTE_FORCE_CAP}")
    per_root = [list(_closed_sets(tree, r)) for r in tree.roots]
    best, best_nodes = None, None
    for combo in itertools.product(*per_root):
        nodes = tuple(sorted(itertools.chain.from_iterable(combo)))
        rq = tree_rq(tree, signal, nodes)
        if best is None or rq > best or (rq == best and nodes < best_nodes):
            best, best_nodes = rq, nodes
    return best, best_nodes


def delta_gain(candidate: Iterable[int], current: Iterable[int], graph: Graph, signal) -> Fraction:
    """Marginal-gain fraction of adding `candidate` to `current`.

    Numerator: energy on edges from the candidate into the current set plus
    edges inside the candidate. Denominator: candidate signal energy.
    """
    cand = set(int(v) for v in candidate)
    cur = set(int(v) for v in current)
    if not cand:
        raise DomainError("empty candidate set")
    if cand & cur:
        raise DomainError("candidate overlaps the current set")
    # every candidate node must reach the current set through candidate nodes
    reached = {v for v in cand if any(u in cur for u in graph.neighbors(v).tolist())}
    stack = list(reached)
    while stack:
        v = stack.pop()
        for u in graph.neighbors(v).tolist():
            if u in cand and u not in reached:
                reached.add(u)
                stack.append(u)
    if reached != cand:
        raise DomainError("candidate set is not connected to the current set")
    x = _as_values(signal)
    first = x[next(iter(cand))]
    num, den = 0 * first, 0 * first
    for v in sorted(cand):
        den += x[v] * x[v]
        for u in graph.neighbors(v).tolist():
            if u in cur or (u in cand and u > v):
                d = x[v] - x[u]
                num += d * d
    return Fraction(num, den)


class SamplerCache:
    """Runs the sampler for many targets and counts sampler invocations."""

    def __init__(self, graph: Graph, signal, depth: int = 2, decay: float = 0.5,
                 threads: int = 1):
        if depth < 1:
            raise ConfigError("depth must be >= 1")
        if not 0.0 < decay <= 1.0:
            raise ConfigError(f"decay must lie in (0, 1], got {decay}")
        self.graph = graph
        self.signal = _as_values(signal)
        self.depth = depth
        self.decay = decay
        self.threads = max(1, int(threads))
        self.calls = 0
        self._nodes: dict[int, SampledSubgraph] = {}
        self._edges: dict[tuple[int, int], SampledSubgraph] = {}

    def _run(self, fn, items):
        self.calls += len(items)
        if self.threads == 1 or len(items) < 2:
            return [fn(i) for i in items]
        with ThreadPoolExecutor(self.threads) as pool:
            # map preserves input order
            return list(pool.map(fn, items))

    def nodes(self, targets: Sequence[int]) -> list[SampledSubgraph]:
        todo = sorted({int(t) for t in targets} - self._nodes.keys())
        res = self._run(lambda t: mrq_sample_node(self.graph, self.signal, t,
                                                  self.depth, self.decay), todo)
        self._nodes.update(zip(todo, res))
        return [self._nodes[int(t)] for t in targets]

    def edges(self, targets: Sequence[Sequence[int]]) -> list[SampledSubgraph]:
        keys = [(min(int(u), int(v)), max(int(u), int(v))) for u, v in targets]
        todo = sorted(set(keys) - self._edges.keys())
        res = self._run(lambda e: mrq_sample_edge(self.graph, self.signal, e,
                                                  self.depth, self.decay), todo)
        self._edges.update(zip(todo, res))
        return [self._edges[k] for k in keys]


def sample_all_nodes(graph: Graph, signal, depth: int = 2, decay: float = 0.5,
                     threads: int = 1) -> list[SampledSubgraph]:
    return SamplerCache(graph, signal, depth, decay, threads).nodes(range(graph.node_count))


def random_instance(rng: random.Random, max_nodes: int = 12, max_depth: int = 2,
                    edge_target: bool = False):
    """Random connected graph, exact rational signal and target for oracle runs.

    Returns ``(graph, signal, roots, depth)``; the BFS tree from `roots`
    never exceeds `max_nodes` because the graph itself does not.
    """
    n = rng.randint(2 if edge_target else 1, max_nodes)
    edges = {(rng.randrange(i), i) for i in range(1, n)}
    for _ in range(rng.randint(0, n)):
        u, v = rng.sample(range(n), 2) if n > 1 else (0, 0)
        if u != v:
            edges.add((min(u, v), max(u, v)))
    graph = Graph.from_edges(n, sorted(edges))
    if rng.random() < 0.25:
        # small integers make ties and zero-energy nodes common
        signal = [PyFraction(rng.randint(0, 3)) for _ in range(n)]
    else:
        signal = [PyFraction(rng.randint(-9, 9), rng.randint(1, 5)) for _ in range(n)]
    depth = rng.randint(1, max_depth)
    if edge_target:
        roots = tuple(graph.edges[rng.randrange(graph.edge_count)].tolist())
    else:
        roots = (rng.randrange(n),)
    return graph, signal, roots, depth


def oracle_check(trials: int = 200, max_nodes: int = 12, seed: int = 0,
                 max_depth: int = 2) -> list[dict]:
    """Compare the tree DP against exhaustive search on random instances.

    Node and edge targets alternate. Returns one record per mismatch, so an
    empty list means every trial matched exactly.
    """
    if trials < 1 or max_nodes < 2 or max_nodes > BRUTE_FORCE_CAP:
        raise ConfigError(f"need trials >= 1 and 2 <= max_nodes <= {BRUTE_FORCE_CAP}")
    rng = random.Random(seed)
    bad = []
    for t in range(trials):
        graph, x, roots, depth = random_instance(rng, max_nodes, max_depth, edge_target=t % 2 == 1)
        tree = build_rooted_tree(graph, roots, depth)
        if len(roots) == 1:
            sub = mrq_sample_node(graph, x, roots[0], depth)
        else:
            sub = mrq_sample_edge(graph, x, roots, depth)
        best, best_nodes = brute_force_max_rq(tree, x)
        if sub.rq != best or tree_rq(tree, x, sub.nodes) != sub.rq:
            bad.append({"trial": t, "roots": list(roots), "dp": str(sub.rq),
                        "brute_force": str(best), "dp_nodes": list(sub.nodes),
                        "best_nodes": list(best_nodes)})
    return bad
