"""Shared fixtures and a search-independent brute-force GED oracle."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from gedkit.graph import Graph, make_pair


def _label_matrix(g: Graph, size: int, codes: dict) -> np.ndarray:
    """``size x size`` matrix: 0 for no edge, else 1 + edge-label code."""
    m = np.zeros((size, size), dtype=np.int64)
    for (u, v), lab in g.edges.items():
        m[u, v] = m[v, u] = 1 + codes.setdefault(lab, len(codes))
    return m


def brute_force_ged(a: Graph, b: Graph) -> int:
    """Minimum edit cost over all injections of the smaller graph into the larger.

    The source is padded with isolated placeholder nodes up to the target
    size; the edge cost of a matching is the number of unordered target
    pairs whose pulled-back edge status or label differs.
    """
    pair = make_pair(a, b)
    g1, g2 = pair.g1, pair.g2
    n1, n2 = g1.n, g2.n
    codes: dict = {}
    m1 = _label_matrix(g1, n2, codes)
    m2 = _label_matrix(g2, n2, codes)
    lab1 = np.array(g1.nodes, dtype=object)
    lab2 = np.array(g2.nodes, dtype=object)
    best = None
    for perm in itertools.permutations(range(n2)):
        head = perm[:n1]
        if n2 > n1 and list(perm[n1:]) != sorted(perm[n1:]):
            continue  # placeholders are interchangeable
        p = np.array(perm)
        node_cost = int(np.sum(lab1 != lab2[list(head)])) + (n2 - n1)
        inv = np.empty(n2, dtype=np.int64)
        inv[p] = np.arange(n2)
        pulled = m1[np.ix_(inv, inv)]
        edge_cost = int(np.sum(pulled != m2)) // 2
        cost = node_cost + edge_cost
        if best is None or cost < best:
            best = cost
    return best


def random_graph(rng: np.random.Generator, n: int, density: float, labels: str = "ABC", gid: str = "r", edge_labels: str = "") -> Graph:
    nodes = [labels[i] for i in rng.integers(0, len(labels), size=n)]
    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < density:
                lab = edge_labels[rng.integers(0, len(edge_labels))] if edge_labels else ""
                edges.append((u, v, lab))
    return Graph.from_edges(gid, nodes, edges)


def random_pair(rng: np.random.Generator, max_nodes: int, min_nodes: int = 1, labels: str = "ABC", edge_labels: str = ""):
    na = int(rng.integers(min_nodes, max_nodes + 1))
    nb = int(rng.integers(min_nodes, max_nodes + 1))
    da, db = rng.uniform(0.1, 0.8, size=2)
    a = random_graph(rng, na, da, labels, "a", edge_labels)
    b = random_graph(rng, nb, db, labels, "b", edge_labels)
    return make_pair(a, b)


def path3(gid="path") -> Graph:
    return Graph.from_edges(gid, ["", "", ""], [(0, 1), (1, 2)])


def triangle(gid="tri") -> Graph:
    return Graph.from_edges(gid, ["", "", ""], [(0, 1), (1, 2), (0, 2)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
