"""Labeled undirected simple graphs and pair canonicalization."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

UNLABELED = ""


class PerturbMode(str, Enum):
    INSERT = "INSERT"
    REMOVE = "REMOVE"


def _edge_key(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class Graph:
    """Immutable labeled undirected simple graph.

    ``nodes`` holds one label per node (index = node id). ``edges`` maps an
    ordered pair ``(u, v)`` with ``u < v`` to the edge label.
    """

    id: str
    nodes: tuple[str, ...]
    edges: dict[tuple[int, int], str] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.nodes)
        if n < 1:
            raise ValueError("a graph needs at least one node")
        clean: dict[tuple[int, int], str] = {}
        for (u, v), lab in self.edges.items():
            if u == v:
                raise ValueError(f"self-loop on node {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"edge ({u}, {v}) out of range for {n} nodes")
            key = _edge_key(u, v)
            if key in clean:
                raise ValueError(f"duplicate edge {key}")
            clean[key] = lab
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", dict(sorted(clean.items())))
        adj: list[list[int]] = [[] for _ in range(n)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        object.__setattr__(self, "_adj", tuple(tuple(sorted(a)) for a in adj))

    @classmethod
    def from_edges(cls, id, labels, edges):
        """Build from a label sequence and an iterable of ``(u, v)`` or ``(u, v, label)``."""
        emap = {}
        for e in edges:
            u, v = int(e[0]), int(e[1])
            key = _edge_key(u, v)
            if key in emap:
                raise ValueError(f"duplicate edge {key}")
            emap[key] = e[2] if len(e) > 2 else UNLABELED
        return cls(str(id), tuple(labels), emap)

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def adjacency(self) -> tuple[tuple[int, ...], ...]:
        return self._adj

    def neighbors(self, u: int) -> tuple[int, ...]:
        return self._adj[u]

    def degree(self, u: int) -> int:
        return len(self._adj[u])

    def degrees(self) -> np.ndarray:
        return np.array([len(a) for a in self._adj], dtype=np.int64)

    def has_edge(self, u: int, v: int) -> bool:
        return _edge_key(u, v) in self.edges

    def edge_label(self, u: int, v: int) -> str | None:
        return self.edges.get(_edge_key(u, v))

    def adjacency_matrix(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=np.float64)
        for u, v in self.edges:
            a[u, v] = a[v, u] = 1.0
        return a

    def check(self) -> None:
        """Re-verify invariants, including adjacency against the edge set."""
        n = self.n
        assert len(self.edges) <= n * (n - 1) // 2
        rebuilt = [set() for _ in range(n)]
        for u, v in self.edges:
            assert u < v and 0 <= u and v < n
            rebuilt[u].add(v)
            rebuilt[v].add(u)
        assert all(set(a) == r for a, r in zip(self._adj, rebuilt))

    def permuted(self, perm, id: str | None = None) -> "Graph":
        """Relabel node ``i`` as ``perm[i]``."""
        perm = list(perm)
        labels = [None] * self.n
        for i, p in enumerate(perm):
            labels[p] = self.nodes[i]
        edges = {_edge_key(perm[u], perm[v]): lab for (u, v), lab in self.edges.items()}
        return Graph(self.id if id is None else id, tuple(labels), edges)

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return self.id == other.id and self.nodes == other.nodes and self.edges == other.edges

    def __hash__(self):
        return hash((self.id, self.nodes, tuple(self.edges.items())))

    def __repr__(self):
        return f"Graph(id={self.id!r}, n={self.n}, m={self.num_edges})"


@dataclass(frozen=True)
class GraphPair:
    g1: Graph
    g2: Graph
    swapped: bool = False

    @property
    def n1(self) -> int:
        return self.g1.n

    @property
    def n2(self) -> int:
        return self.g2.n


def make_pair(a: Graph, b: Graph) -> GraphPair:
    """Order a pair so the source has no more nodes than the target.

    Ties keep the input order.
    """
    if a.n <= b.n:
        return GraphPair(a, b, False)
    return GraphPair(b, a, True)


def perturb_edges(g: Graph, fraction: float, mode, seed: int) -> Graph:
    """Insert or remove ``ceil(fraction * |E|)`` uniformly chosen edges.

    Insertions are capped at the number of non-edges. New edges are unlabeled.
    """
    mode = PerturbMode(mode)
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    count = math.ceil(fraction * g.num_edges - 1e-12) if fraction > 0 else 0
    rng = np.random.default_rng(seed)
    edges = dict(g.edges)
    if mode is PerturbMode.REMOVE:
        count = min(count, len(edges))
        if count:
            keys = list(edges)
            for idx in rng.choice(len(keys), size=count, replace=False):
                del edges[keys[idx]]
    else:
        complement = [(u, v) for u in range(g.n) for v in range(u + 1, g.n) if (u, v) not in edges]
        count = min(count, len(complement))
        if count:
            for idx in rng.choice(len(complement), size=count, replace=False):
                edges[complement[idx]] = UNLABELED
    return Graph(g.id, g.nodes, edges)
