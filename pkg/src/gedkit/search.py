"""Edit-cost evaluation of node matchings and best-first A* GED search.

Source nodes are matched in index order: the state at level ``i`` has source
nodes ``0..i-1`` assigned. A complete matching assigns every source node; the
target nodes left over are inserted.
"""

from __future__ import annotations

import heapq
import math
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .graph import GraphPair

UNSET = -1

# (level, used-target bitmask, assigned prefix) -> ordered target indices to try
CandidateProvider = Callable[[int, int, tuple], Sequence[int]]


class SearchTimeout(RuntimeError):
    """Raised when a search exceeds its budget without any complete matching."""


def normalized_similarity(ged: float, n1: int, n2: int) -> float:
    return math.exp(-2.0 * ged / (n1 + n2))


@dataclass
class NodeMatching:
    assigned: list[int]
    g_cost: int = 0

    @property
    def level(self) -> int:
        return sum(1 for a in self.assigned if a != UNSET)

    def is_complete(self) -> bool:
        return all(a != UNSET for a in self.assigned)

    def check(self) -> None:
        lvl = self.level
        assert all(a != UNSET for a in self.assigned[:lvl])
        assert all(a == UNSET for a in self.assigned[lvl:])
        used = [a for a in self.assigned if a != UNSET]
        assert len(set(used)) == len(used)


@dataclass(order=True)
class SearchState:
    lb: int
    level: int = field(compare=False)
    matching: tuple = field(compare=False)
    parent: "SearchState | None" = field(compare=False, default=None, repr=False)
    g_cost: int = field(compare=False, default=0)


@dataclass
class GedResult:
    distance: int
    normalized_similarity: float
    matching: NodeMatching
    expanded_states: int = 0
    elapsed: float = 0.0
    timed_out: bool = False

    def edit_path(self, pair: GraphPair) -> list[tuple]:
        return edit_operations(pair, self.matching.assigned)


def _validate_complete(pair: GraphPair, assigned: Sequence[int]) -> None:
    if len(assigned) != pair.n1:
        raise ValueError(f"matching has {len(assigned)} entries, source has {pair.n1} nodes")
    if any(a == UNSET or a is None for a in assigned):
        raise ValueError("matching is partial")
    if any(not 0 <= a < pair.n2 for a in assigned):
        raise ValueError("matching points outside the target graph")
    if len(set(assigned)) != len(assigned):
        raise ValueError("matching is not injective")


def edit_operations(pair: GraphPair, assigned: Sequence[int]) -> list[tuple]:
    """List the edit operations induced by a complete matching."""
    _validate_complete(pair, assigned)
    g1, g2 = pair.g1, pair.g2
    ops = []
    for i, k in enumerate(assigned):
        if g1.nodes[i] != g2.nodes[k]:
            ops.append(("relabel_node", i, k, g1.nodes[i], g2.nodes[k]))
    image = set(assigned)
    for k in range(g2.n):
        if k not in image:
            ops.append(("insert_node", k, g2.nodes[k]))
    covered = set()
    for (i, j), lab in g1.edges.items():
        a, b = assigned[i], assigned[j]
        tlab = g2.edge_label(a, b)
        if tlab is None:
            ops.append(("delete_edge", i, j))
        else:
            covered.add((min(a, b), max(a, b)))
            if tlab != lab:
                ops.append(("relabel_edge", i, j, lab, tlab))
    for (a, b), lab in g2.edges.items():
        if (a, b) not in covered:
            ops.append(("insert_edge", a, b, lab))
    return ops


def mapping_edit_cost(pair: GraphPair, matching) -> int:
    """Uniform edit cost of the edit path induced by a complete injective matching."""
    assigned = matching.assigned if isinstance(matching, NodeMatching) else list(matching)
    return len(edit_operations(pair, assigned))


class _Prepared:
    """Integer-coded view of a pair for the inner search loop."""

    def __init__(self, pair: GraphPair):
        g1, g2 = pair.g1, pair.g2
        self.n1, self.n2 = g1.n, g2.n
        alphabet = {lab: idx for idx, lab in enumerate(sorted(set(g1.nodes) | set(g2.nodes)))}
        self.lab1 = [alphabet[x] for x in g1.nodes]
        self.lab2 = [alphabet[x] for x in g2.nodes]
        self.nlab = len(alphabet)
        # earlier source neighbours of each source node, with the edge label
        self.back1 = [[(j, g1.edge_label(i, j)) for j in g1.neighbors(i) if j < i] for i in range(self.n1)]
        self.mask2 = [sum(1 << v for v in g2.neighbors(k)) for k in range(self.n2)]
        self.elab2 = g2.edges
        self.m2 = g2.num_edges
        # source edges with at least one endpoint >= level
        self.e1_rest = [sum(1 for (u, v) in g1.edges if v >= lvl) for lvl in range(self.n1 + 1)]
        suffix = []
        for lvl in range(self.n1 + 1):
            suffix.append(Counter(self.lab1[lvl:]))
        self.suffix1 = suffix
        tot2 = [0] * self.nlab
        for x in self.lab2:
            tot2[x] += 1
        self.tot2 = tuple(tot2)

    def child(self, level, assigned, used, inner2, img, g, k):
        """Cost increment and bookkeeping for assigning source ``level`` to target ``k``."""
        cost = g + (self.lab1[level] != self.lab2[k])
        kmask = self.mask2[k]
        preserved = 0
        back = self.back1[level]
        for j, lab in back:
            t = assigned[j]
            if kmask >> t & 1:
                preserved += 1
                if self.elab2[(t, k) if t < k else (k, t)] != lab:
                    cost += 1
        into_image = bin(kmask & used).count("1")
        cost += (len(back) - preserved) + (into_image - preserved)
        inner2 += into_image
        img = img[: self.lab2[k]] + (img[self.lab2[k]] + 1,) + img[self.lab2[k] + 1 :]
        return cost, inner2, img

    def heuristic(self, level, inner2, img) -> int:
        if level == self.n1:
            return 0
        rest1 = self.suffix1[level]
        n1u = self.n1 - level
        n2u = self.n2 - level
        common = 0
        for lab, c in rest1.items():
            common += min(c, self.tot2[lab] - img[lab])
        e2r = self.m2 - inner2
        return (n2u - n1u) + (n1u - common) + abs(self.e1_rest[level] - e2r)

    def finish(self, cost, inner2) -> int:
        """Charge leftover node insertions and target edges outside the image."""
        return cost + (self.n2 - self.n1) + (self.m2 - inner2)


def _walk(prep: _Prepared, assigned):
    used, inner2, img, g = 0, 0, (0,) * prep.nlab, 0
    for lvl, k in enumerate(assigned):
        g, inner2, img = prep.child(lvl, assigned, used, inner2, img, g, k)
        used |= 1 << k
    if len(assigned) == prep.n1:
        g = prep.finish(g, inner2)
    return g, inner2, img


def _prefix(state) -> list[int]:
    if isinstance(state, SearchState):
        return list(state.matching)
    if isinstance(state, NodeMatching):
        return [a for a in state.assigned if a != UNSET]
    return [a for a in state if a != UNSET]


def prefix_cost(pair: GraphPair, state) -> int:
    """Edit cost of the decided part of a (partial) matching, from scratch."""
    assigned = _prefix(state)
    if len(set(assigned)) != len(assigned):
        raise ValueError("matching is not injective")
    return _walk(_Prepared(pair), assigned)[0]


def lower_bound(pair: GraphPair, state) -> int:
    """``g_cost`` plus the admissible label-multiset and edge-count heuristic.

    ``state`` may be a :class:`SearchState`, a :class:`NodeMatching`, or a
    sequence of assigned targets (a prefix in source order).
    """
    assigned = _prefix(state)
    prep = _Prepared(pair)
    g, inner2, img = _walk(prep, assigned)
    return g + prep.heuristic(len(assigned), inner2, img)


class FullCandidates:
    """Every unused target node, in index order."""

    def __init__(self, n2: int):
        self.n2 = n2

    def __call__(self, level, used, assigned):
        return [k for k in range(self.n2) if not used >> k & 1]


def astar_ged(
    pair: GraphPair,
    candidates: CandidateProvider | None = None,
    beam_width: int | None = None,
    timeout: float | None = 60.0,
    debug: bool = False,
) -> GedResult:
    """Best-first search over node matchings.

    With the default provider (all unused targets) and no beam this is exact.
    With ``beam_width`` only the ``beam_width`` lowest-bound children of each
    expansion are queued. Returns when a complete matching is popped.
    """
    start = time.perf_counter()
    prep = _Prepared(pair)
    n1 = prep.n1
    provider = candidates if candidates is not None else FullCandidates(prep.n2)
    img0 = (0,) * prep.nlab
    seq = 0
    # heap entries: (lb, -level, seq, g, assigned, used, inner2, img)
    heap = [(prep.heuristic(0, 0, img0), 0, 0, 0, (), 0, 0, img0)]
    expanded = 0
    best_complete = None
    deadline = None if timeout is None else start + timeout

    while heap:
        lb, neg_level, _, g, assigned, used, inner2, img = heapq.heappop(heap)
        level = -neg_level
        if level == n1:
            return _result(pair, assigned, g, expanded, start, False, debug)
        expanded += 1
        if deadline is not None and expanded % 64 == 0 and time.perf_counter() > deadline:
            break
        children = []
        for k in provider(level, used, assigned):
            if used >> k & 1:
                continue
            cg, cin, cimg = prep.child(level, assigned, used, inner2, img, g, k)
            child_assigned = assigned + (k,)
            if level + 1 == n1:
                cg = prep.finish(cg, cin)
                clb = cg
                if best_complete is None or cg < best_complete[0]:
                    best_complete = (cg, child_assigned)
            else:
                clb = cg + prep.heuristic(level + 1, cin, cimg)
            children.append((clb, k, cg, child_assigned, used | 1 << k, cin, cimg))
        if beam_width is not None and len(children) > beam_width:
            children.sort(key=lambda c: (c[0], c[1]))
            children = children[:beam_width]
        for clb, k, cg, child_assigned, cused, cin, cimg in children:
            seq += 1
            heapq.heappush(heap, (clb, -(level + 1), seq, cg, child_assigned, cused, cin, cimg))

    if best_complete is not None:
        return _result(pair, best_complete[1], best_complete[0], expanded, start, True, debug)
    raise SearchTimeout(f"no complete matching within {timeout}s ({expanded} expansions)")


def _result(pair, assigned, g, expanded, start, timed_out, debug) -> GedResult:
    if debug:
        exact = mapping_edit_cost(pair, assigned)
        assert exact == g, f"incremental cost {g} != recomputed {exact}"
    m = NodeMatching(list(assigned), g)
    return GedResult(
        distance=int(g),
        normalized_similarity=normalized_similarity(g, pair.n1, pair.n2),
        matching=m,
        expanded_states=expanded,
        elapsed=time.perf_counter() - start,
        timed_out=timed_out,
    )


def exact_ged(pair: GraphPair, timeout: float | None = 60.0) -> GedResult:
    return astar_ged(pair, None, None, timeout)


def beam_ged(pair: GraphPair, beam_width: int = 5, timeout: float | None = 60.0) -> GedResult:
    return astar_ged(pair, None, beam_width, timeout)


def search_path(pair: GraphPair, assigned: Sequence[int]) -> list[SearchState]:
    """States along the root-to-leaf path of ``assigned`` with their bounds."""
    states = []
    parent = None
    for lvl in range(len(assigned) + 1):
        prefix = tuple(assigned[:lvl])
        st = SearchState(lower_bound(pair, prefix), lvl, prefix, parent, prefix_cost(pair, prefix))
        states.append(st)
        parent = st
    return states
