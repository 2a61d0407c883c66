"""Graph and pair files, synthetic datasets and ground-truth labels.

Graph file: one JSON object per line,
``{"id": str, "nodes": [str, ...], "edges": [[int, int, str], ...]}``.

Pair file: one JSON object per line,
``{"g1", "g2", "split", "ged", "sim", "matching", "producer"}`` where
``matching[i]`` is the target of source node ``i``. Source means the pair's
graph with fewer nodes (``g1`` on ties).
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .bipartite import bipartite_ged
from .graph import Graph, GraphPair, make_pair
from .search import SearchTimeout, astar_ged, lower_bound, mapping_edit_cost, normalized_similarity

log = logging.getLogger(__name__)

EXACT = "EXACT"
BEST_OF_METHODS = "BEST_OF_METHODS"
TIMEOUT = "TIMEOUT"
UNLABELED = ""
SPLITS = ("train", "val", "test")


def _dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False)


def graph_to_json(g: Graph) -> dict:
    return {"id": g.id, "nodes": list(g.nodes), "edges": [[u, v, lab] for (u, v), lab in g.edges.items()]}


def graph_from_json(obj) -> Graph:
    if isinstance(obj, str):
        obj = json.loads(obj)
    return Graph.from_edges(obj["id"], obj["nodes"], [tuple(e) for e in obj["edges"]])


def dumps_graphs(graphs: Iterable[Graph]) -> str:
    return "".join(_dumps(graph_to_json(g)) + "\n" for g in graphs)


def loads_graphs(text: str) -> list[Graph]:
    return [graph_from_json(line) for line in text.splitlines() if line.strip()]


def write_graphs(path, graphs) -> None:
    Path(path).write_text(dumps_graphs(graphs), encoding="utf-8")


def read_graphs(path) -> list[Graph]:
    return loads_graphs(Path(path).read_text(encoding="utf-8"))


@dataclass
class PairLabel:
    ged: int
    normalized_similarity: float
    matching: list[int]
    producer: str = EXACT


@dataclass
class PairRecord:
    g1: str
    g2: str
    split: str = "train"
    label: PairLabel | None = None
    producer: str = UNLABELED  # set without a label for tombstones

    @property
    def tag(self) -> str:
        return self.label.producer if self.label is not None else self.producer

    def to_json(self) -> dict:
        lab = self.label
        return {
            "g1": self.g1,
            "g2": self.g2,
            "split": self.split,
            "ged": None if lab is None else int(lab.ged),
            "sim": None if lab is None else float(lab.normalized_similarity),
            "matching": None if lab is None else [int(x) for x in lab.matching],
            "producer": self.tag,
        }

    @classmethod
    def from_json(cls, obj) -> "PairRecord":
        if isinstance(obj, str):
            obj = json.loads(obj)
        label = None
        if obj.get("ged") is not None:
            label = PairLabel(int(obj["ged"]), float(obj["sim"]), list(obj.get("matching") or []), obj.get("producer", EXACT))
        tomb = UNLABELED if label is not None else (obj.get("producer") or UNLABELED)
        return cls(obj["g1"], obj["g2"], obj.get("split", "train"), label, tomb)


def dumps_pairs(records: Iterable[PairRecord]) -> str:
    return "".join(_dumps(r.to_json()) + "\n" for r in records)


def loads_pairs(text: str) -> list[PairRecord]:
    return [PairRecord.from_json(line) for line in text.splitlines() if line.strip()]


def write_pairs(path, records) -> None:
    Path(path).write_text(dumps_pairs(records), encoding="utf-8")


def read_pairs(path) -> list[PairRecord]:
    return loads_pairs(Path(path).read_text(encoding="utf-8"))


@dataclass
class Dataset:
    graphs: dict[str, Graph]
    pairs: list[PairRecord] = field(default_factory=list)

    def __post_init__(self):
        if not isinstance(self.graphs, dict):
            self.graphs = {g.id: g for g in self.graphs}
        self.validate()

    def validate(self) -> None:
        for r in self.pairs:
            if r.g1 not in self.graphs or r.g2 not in self.graphs:
                raise ValueError(f"pair ({r.g1}, {r.g2}) references an unknown graph")
            if r.split not in SPLITS:
                raise ValueError(f"unknown split {r.split!r}")

    def pair(self, record: PairRecord) -> GraphPair:
        return make_pair(self.graphs[record.g1], self.graphs[record.g2])

    def split(self, name: str) -> list[PairRecord]:
        return [r for r in self.pairs if r.split == name]

    @classmethod
    def load(cls, graphs_path, pairs_path) -> "Dataset":
        return cls(read_graphs(graphs_path), read_pairs(pairs_path))

    def save(self, graphs_path, pairs_path) -> None:
        write_graphs(graphs_path, self.graphs.values())
        write_pairs(pairs_path, self.pairs)


def label_alphabet(size: int) -> list[str]:
    """``A..Z`` then ``L26, L27, ...``."""
    return [chr(ord("A") + i) if i < 26 else f"L{i}" for i in range(size)]


def generate_random_graphs(count, node_range, edge_density, label_alphabet_size, seed, id_prefix="g") -> list[Graph]:
    """Erdos-Renyi graphs with uniformly drawn sizes and labels."""
    lo, hi = node_range
    if lo < 1 or hi < lo:
        raise ValueError("node_range must satisfy 1 <= min <= max")
    if not 0.0 <= edge_density <= 1.0:
        raise ValueError("edge_density must lie in [0, 1]")
    alphabet = label_alphabet(label_alphabet_size)
    rng = np.random.default_rng(seed)
    width = len(str(max(count - 1, 0)))
    graphs = []
    for idx in range(count):
        n = int(rng.integers(lo, hi + 1))
        labels = [alphabet[i] for i in rng.integers(0, len(alphabet), size=n)]
        iu, ju = np.triu_indices(n, k=1)
        keep = rng.random(iu.size) < edge_density
        edges = [(int(u), int(v)) for u, v in zip(iu[keep], ju[keep])]
        graphs.append(Graph.from_edges(f"{id_prefix}{idx:0{width}d}", labels, edges))
    return graphs


def sample_pairs(graphs: list[Graph], num_pairs: int, seed: int) -> list[tuple[str, str]]:
    """Distinct unordered graph pairs (self-pairs excluded), sampled uniformly."""
    n = len(graphs)
    total = n * (n - 1) // 2
    num_pairs = min(num_pairs, total)
    rng = np.random.default_rng(seed)
    flat = np.sort(rng.choice(total, size=num_pairs, replace=False))
    # invert the row-major upper-triangle index
    iu, ju = np.triu_indices(n, k=1)
    return [(graphs[iu[f]].id, graphs[ju[f]].id) for f in flat]


def assign_splits(pairs, seed: int, fractions=(0.6, 0.2, 0.2)) -> list[PairRecord]:
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(pairs))
    n_train = int(round(fractions[0] * len(pairs)))
    n_val = int(round(fractions[1] * len(pairs)))
    split_of = np.empty(len(pairs), dtype=object)
    split_of[order[:n_train]] = "train"
    split_of[order[n_train : n_train + n_val]] = "val"
    split_of[order[n_train + n_val :]] = "test"
    return [PairRecord(a, b, str(split_of[i])) for i, (a, b) in enumerate(pairs)]


def make_dataset(count, node_range, edge_density, label_alphabet_size, num_pairs, seed, fractions=(0.6, 0.2, 0.2)) -> Dataset:
    ss = np.random.SeedSequence(seed)
    s_graphs, s_pairs, s_split = (int(s.generate_state(1)[0]) for s in ss.spawn(3))
    graphs = generate_random_graphs(count, node_range, edge_density, label_alphabet_size, s_graphs)
    pairs = sample_pairs(graphs, num_pairs, s_pairs)
    return Dataset(graphs, assign_splits(pairs, s_split, fractions))


# ground truth

Refiner = Callable[[GraphPair], "object"]


def _exact_label(args):
    pair, time_budget = args
    try:
        res = astar_ged(pair, timeout=time_budget)
    except SearchTimeout:
        return None
    if res.timed_out:
        return None
    return PairLabel(res.distance, res.normalized_similarity, list(res.matching.assigned), EXACT)


def _best_of_label(pair: GraphPair, time_budget, beam_width, extra: dict[str, Refiner]):
    results = []
    try:
        results.append(("beam", astar_ged(pair, beam_width=beam_width, timeout=time_budget)))
    except SearchTimeout:
        pass
    results.append(("hungarian", bipartite_ged(pair, "hungarian")))
    results.append(("vj", bipartite_ged(pair, "vj")))
    for name, fn in extra.items():
        try:
            results.append((name, fn(pair)))
        except SearchTimeout:
            pass
    best = min(results, key=lambda nr: nr[1].distance)[1]
    return PairLabel(best.distance, best.normalized_similarity, list(best.matching.assigned), BEST_OF_METHODS)


def build_ground_truth(
    dataset: Dataset,
    exact_budget_nodes: int,
    time_budget: float = 10.0,
    beam_width: int = 5,
    extra_methods: dict[str, Refiner] | None = None,
    previous: list[PairRecord] | None = None,
    workers: int = 1,
) -> list[PairRecord]:
    """Label every pair of ``dataset``.

    Pairs whose larger graph has at most ``exact_budget_nodes`` nodes are
    solved exactly; the others take the smallest distance among beam A*, the
    two bipartite baselines and any ``extra_methods`` (e.g. a trained
    refiner). A pair whose exact solve runs over ``time_budget`` seconds gets
    a ``TIMEOUT`` tombstone. ``previous`` labels are kept when they are better.
    """
    extra = extra_methods or {}
    prev = {(r.g1, r.g2): r for r in previous or []}
    pairs = [dataset.pair(r) for r in dataset.pairs]
    is_exact = [p.n2 <= exact_budget_nodes for p in pairs]
    exact_jobs = [(p, time_budget) for p, ex in zip(pairs, is_exact) if ex]
    if workers > 1 and exact_jobs:
        with ProcessPoolExecutor(workers) as pool:
            exact_out = list(pool.map(_exact_label, exact_jobs, chunksize=16))
    else:
        exact_out = [_exact_label(job) for job in exact_jobs]
    exact_iter = iter(exact_out)

    out = []
    for rec, pair, ex in zip(dataset.pairs, pairs, is_exact):
        if ex:
            label = next(exact_iter)
            if label is None:
                log.warning("pair (%s, %s) exceeded the %.1fs exact budget", rec.g1, rec.g2, time_budget)
                out.append(PairRecord(rec.g1, rec.g2, rec.split, None, TIMEOUT))
                continue
        else:
            label = _best_of_label(pair, time_budget, beam_width, extra)
            old = prev.get((rec.g1, rec.g2))
            if old is not None and old.label is not None and old.label.ged < label.ged:
                label = old.label
        out.append(PairRecord(rec.g1, rec.g2, rec.split, label))
    return out


def verify_label(dataset: Dataset, record: PairRecord) -> bool:
    """Check that the stored witness re-evaluates to the stored distance."""
    if record.label is None:
        return False
    return mapping_edit_cost(dataset.pair(record), record.label.matching) == record.label.ged


def certified_label(pair: GraphPair, matching) -> PairLabel | None:
    """``EXACT`` label for ``matching`` if the root lower bound already equals its cost.

    No search is needed then: the bound is admissible, so no matching can be
    cheaper. Returns ``None`` when the witness cannot be certified this way.
    """
    cost = mapping_edit_cost(pair, matching)
    if lower_bound(pair, []) != cost:
        return None
    return PairLabel(cost, normalized_similarity(cost, pair.n1, pair.n2), [int(t) for t in matching], EXACT)


def edited_copies(graphs: list[Graph], max_removals: int, seed: int, suffix: str = "~") -> tuple[list[Graph], list[PairRecord]]:
    """Pair each graph with a node-shuffled copy missing up to ``max_removals`` edges.

    Removing edges only changes the edge count by the number removed, which
    the root lower bound sees, so every pair gets a certified exact label
    even for graphs far beyond the reach of exact search.
    """
    rng = np.random.default_rng(seed)
    copies, records = [], []
    for g in graphs:
        edges = dict(g.edges)
        keys = list(edges)
        m = int(rng.integers(0, min(max_removals, len(keys)) + 1))
        for idx in rng.choice(len(keys), size=m, replace=False):
            del edges[keys[idx]]
        perm = rng.permutation(g.n)
        h = Graph(g.id + suffix, g.nodes, edges).permuted(perm)
        label = certified_label(make_pair(g, h), perm.tolist())
        if label is None:  # cannot happen for pure removals; kept as a guard
            raise RuntimeError(f"could not certify the copy of {g.id}")
        copies.append(h)
        records.append(PairRecord(g.id, h.id, "train", label))
    return copies, records
