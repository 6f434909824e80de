"""Undirected simple graphs, edge-list I/O and the two-party partition sampler."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping

__all__ = [
    "GraphError",
    "Graph",
    "Partition",
    "load_edge_list",
    "dump_edge_list",
    "partition",
    "partition_by_ppt",
    "union_graph",
    "random_graph",
    "random_graph_with_edges",
    "planted_partition_graph",
]


class GraphError(ValueError):
    pass


def _norm_edge(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


class Graph:
    """An undirected simple graph on nodes 0..n-1 with optional node labels.

    Edges are stored as a frozenset of (u, v) tuples with u < v.  Instances
    are immutable after construction; the adjacency index is built lazily on
    first neighborhood query.
    """

    __slots__ = ("n", "edges", "labels", "_adj")

    def __init__(self, n: int, edges: Iterable[tuple[int, int]],
                 labels: Mapping[int, int] | None = None):
        normalized = set()
        for u, v in edges:
            if u == v:
                raise GraphError(f"self-loop on node {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise GraphError(f"edge ({u}, {v}) out of range for n={n}")
            normalized.add(_norm_edge(u, v))
        if labels is not None:
            for node in labels:
                if not 0 <= node < n:
                    raise GraphError(f"label for out-of-range node {node}")
            labels = dict(labels)
        self.n = n
        self.edges = frozenset(normalized)
        self.labels = labels
        self._adj = None

    def _adjacency(self):
        if self._adj is None:
            adj = [set() for _ in range(self.n)]
            for u, v in self.edges:
                adj[u].add(v)
                adj[v].add(u)
            self._adj = [frozenset(s) for s in adj]
        return self._adj

    def neighbors(self, x: int) -> frozenset[int]:
        if not 0 <= x < self.n:
            raise GraphError(f"node {x} out of range for n={self.n}")
        return self._adjacency()[x]

    def degree(self, x: int) -> int:
        return len(self.neighbors(x))

    def has_edge(self, u: int, v: int) -> bool:
        return _norm_edge(u, v) in self.edges

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def replace_edges(self, edges: Iterable[tuple[int, int]]) -> "Graph":
        return Graph(self.n, edges, self.labels)

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (self.n, self.edges, self.labels) == (other.n, other.edges, other.labels)

    def __repr__(self):
        return f"Graph(n={self.n}, edges={self.num_edges})"


@dataclass(frozen=True)
class Partition:
    """A two-party split of a source graph; both parties see every node."""

    g1: Graph
    g2: Graph
    q1: float
    q2: float
    seed: int
    ppt: float | None = field(default=None)


def load_edge_list(text: str) -> Graph:
    """Parse whitespace-separated "u v" lines into a Graph.

    Directives start with ``#``: ``# n <count>`` overrides the node count
    (default is 1 + max node id) and ``# label <node> <class>`` attaches a
    node label.  Any other ``#`` line is a comment.
    """
    edges: list[tuple[int, int]] = []
    labels: dict[int, int] = {}
    n_override = None
    max_id = -1
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            tokens = line[1:].split()
            if tokens[:1] == ["n"] and len(tokens) == 2:
                try:
                    n_override = int(tokens[1])
                except ValueError:
                    raise GraphError(f"line {lineno}: bad node count {tokens[1]!r}")
            elif tokens[:1] == ["label"] and len(tokens) == 3:
                try:
                    labels[int(tokens[1])] = int(tokens[2])
                except ValueError:
                    raise GraphError(f"line {lineno}: bad label directive {line!r}")
            continue
        tokens = line.split()
        if len(tokens) != 2:
            raise GraphError(f"line {lineno}: expected two tokens, got {len(tokens)}")
        try:
            u, v = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise GraphError(f"line {lineno}: non-integer node id in {line!r}")
        if u == v:
            raise GraphError(f"line {lineno}: self-loop on node {u}")
        if u < 0 or v < 0:
            raise GraphError(f"line {lineno}: negative node id in {line!r}")
        edges.append((u, v))
        max_id = max(max_id, u, v)
    if labels:
        max_id = max(max_id, max(labels))
    n = n_override if n_override is not None else max_id + 1
    return Graph(max(n, 0), edges, labels or None)


def dump_edge_list(g: Graph) -> str:
    lines = [f"# n {g.n}"]
    if g.labels:
        lines += [f"# label {node} {cls}" for node, cls in sorted(g.labels.items())]
    lines += [f"{u} {v}" for u, v in g.sorted_edges()]
    return "\n".join(lines) + "\n"


def partition(g: Graph, q1: float, q2: float, seed: int) -> Partition:
    """Split edges between two parties by a per-edge uniform draw v.

    v <= q1 puts the edge only in G1, q1 < v <= q2 only in G2, and any
    larger draw puts it in both.  Deterministic for a fixed seed.
    """
    if not 0 <= q1 <= q2 <= 1:
        raise GraphError(f"require 0 <= q1 <= q2 <= 1, got q1={q1}, q2={q2}")
    rng = random.Random(seed)
    e1, e2 = [], []
    for edge in g.sorted_edges():
        v = rng.random()
        if v <= q1:
            e1.append(edge)
        elif v <= q2:
            e2.append(edge)
        else:
            e1.append(edge)
            e2.append(edge)
    return Partition(Graph(g.n, e1, g.labels), Graph(g.n, e2, g.labels), q1, q2, seed)


def partition_by_ppt(g: Graph, ppt: float, seed: int) -> Partition:
    """Partition targeting a shared-edge proportion ppt, exclusive mass split evenly."""
    if not 0 <= ppt <= 1:
        raise GraphError(f"ppt must be in [0, 1], got {ppt}")
    q1 = (1 - ppt) / 2
    q2 = 1 - ppt
    part = partition(g, q1, q2, seed)
    return Partition(part.g1, part.g2, q1, q2, seed, ppt=ppt)


def union_graph(g1: Graph, g2: Graph) -> Graph:
    if g1.n != g2.n:
        raise GraphError(f"node-count mismatch: {g1.n} != {g2.n}")
    labels = None
    if g1.labels or g2.labels:
        labels = dict(g2.labels or {})
        labels.update(g1.labels or {})
    return Graph(g1.n, g1.edges | g2.edges, labels)


def random_graph(n: int, density: float, seed: int,
                 labels: Mapping[int, int] | None = None) -> Graph:
    """Erdos-Renyi graph with independent edge probability ``density``."""
    rng = random.Random(seed)
    edges = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < density]
    return Graph(n, edges, labels)


def random_graph_with_edges(n: int, m: int, seed: int) -> Graph:
    """Uniform random graph with exactly m edges."""
    limit = n * (n - 1) // 2
    if m > limit:
        raise GraphError(f"cannot place {m} edges on {n} nodes")
    rng = random.Random(seed)
    edges: set[tuple[int, int]] = set()
    while len(edges) < m:
        u = rng.randrange(n)
        v = rng.randrange(n)
        if u != v:
            edges.add(_norm_edge(u, v))
    return Graph(n, edges)


def planted_partition_graph(n: int, p_in: float, p_out: float, seed: int) -> Graph:
    """Two-community graph with binary node labels; intra-class edges denser."""
    rng = random.Random(seed)
    labels = {i: i % 2 for i in range(n)}
    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            p = p_in if labels[u] == labels[v] else p_out
            if rng.random() < p:
                edges.append((u, v))
    return Graph(n, edges, labels)
