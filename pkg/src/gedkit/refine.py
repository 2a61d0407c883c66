"""Mapping refinement: A* restricted to learned candidate targets."""

from __future__ import annotations

import time
from dataclasses import dataclass

from .graph import GraphPair
from .matching import CandidateSet
from .search import GedResult, astar_ged


class RankedCandidates:
    """Search provider over per-source candidate rankings.

    At level ``i`` the provider yields the still-unused targets among the
    first ``k`` entries of row ``i``. When all of them are taken it yields
    only the best-ranked unused target, where the ranking continues past the
    candidates with the remaining targets in index order. The search tree for
    ``k`` is therefore contained in the tree for ``k + 1``.
    """

    def __init__(self, candidates: CandidateSet, n2: int, k: int | None = None):
        candidates.check(n2)
        k = candidates.k if k is None else k
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = k
        self.rankings = []
        for row in candidates.rows:
            seen = set(row)
            self.rankings.append(list(row) + [t for t in range(n2) if t not in seen])

    def __call__(self, level, used, assigned):
        ranking = self.rankings[level]
        out = [t for t in ranking[: self.k] if not used >> t & 1]
        if out:
            return out
        for t in ranking[self.k :]:
            if not used >> t & 1:
                return [t]
        return []


def mata_star(pair: GraphPair, candidates: CandidateSet, k: int | None = None, timeout: float | None = 60.0) -> GedResult:
    """Approximate GED by A* over the candidate-restricted matching tree.

    ``k`` truncates every candidate row (default: use the full rows). The
    distance is always an upper bound on the exact GED and equals it once
    the candidates cover every target.
    """
    if len(candidates.rows) != pair.n1:
        raise ValueError(f"candidate rows ({len(candidates.rows)}) != source nodes ({pair.n1})")
    return astar_ged(pair, RankedCandidates(candidates, pair.n2, k), timeout=timeout)


@dataclass
class SweepPoint:
    k: int
    distance: int
    elapsed: float
    expanded_states: int


def k_sweep(pair: GraphPair, candidates: CandidateSet, k_values, timeout: float | None = 60.0) -> list[SweepPoint]:
    """Refinement distance for each ``k``; candidate rows must hold at least ``max(k_values)`` entries."""
    k_values = list(k_values)
    if k_values and max(k_values) > candidates.k:
        raise ValueError(f"candidate rows hold {candidates.k} entries, sweep asks for {max(k_values)}")
    out = []
    for k in k_values:
        start = time.perf_counter()
        res = mata_star(pair, candidates, k, timeout)
        out.append(SweepPoint(k, res.distance, time.perf_counter() - start, res.expanded_states))
    return out
