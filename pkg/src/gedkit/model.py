"""End-to-end matching model: SEGcn embeddings feeding the matching head."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import matching as M
from . import segcn as S
from . import tensor as T
from .graph import Graph, GraphPair
from .matching import CandidateSet


@dataclass
class ModelConfig:
    segcn: S.SegcnConfig = field(default_factory=S.SegcnConfig)
    k: int = 4
    epsilon: float = M.SINKHORN_EPSILON
    tol: float = M.SINKHORN_TOL
    max_iter: int = M.SINKHORN_MAX_ITER
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "segcn": self.segcn.to_dict(),
            "k": self.k,
            "epsilon": self.epsilon,
            "tol": self.tol,
            "max_iter": self.max_iter,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["segcn"] = S.SegcnConfig(**d["segcn"])
        return cls(**d)


def keep_mass(k: int, n1: int, n2: int) -> int:
    """Sinkhorn keep capacity: ``k`` cells for every source node, at most every cell."""
    return min(k * n1, n1 * n2)


@dataclass
class PairBatch:
    pairs: list[GraphPair]
    features: S.BatchFeatures
    g1_index: np.ndarray
    g2_index: np.ndarray
    src: np.ndarray
    tgt: np.ndarray
    segments: np.ndarray
    cell_start: np.ndarray
    pooling: sp.csr_matrix

    @property
    def size(self) -> int:
        return len(self.pairs)

    def block(self, values: np.ndarray, p: int) -> np.ndarray:
        pair = self.pairs[p]
        start = self.cell_start[p]
        return values[start : start + pair.n1 * pair.n2].reshape(pair.n1, pair.n2)

    def witness_cells(self, matchings) -> np.ndarray:
        cells = []
        for p, m in enumerate(matchings):
            n2 = self.pairs[p].n2
            cells.extend(self.cell_start[p] + i * n2 + int(t) for i, t in enumerate(m))
        return np.asarray(cells, dtype=np.int64)


@dataclass
class ModelOutput:
    batch: PairBatch
    s0: T.Tensor
    sl: T.Tensor
    a0: T.Tensor
    al: T.Tensor
    d_pred: T.Tensor

    def assignment(self, p: int) -> tuple[np.ndarray, np.ndarray]:
        return self.batch.block(self.a0.data, p), self.batch.block(self.al.data, p)

    def similarity(self, p: int) -> tuple[np.ndarray, np.ndarray]:
        return self.batch.block(self.s0.data, p), self.batch.block(self.sl.data, p)


class GedModel:
    def __init__(self, cfg: ModelConfig, params: dict[str, T.Tensor]):
        self.cfg = cfg
        self.params = params
        self._features: dict[tuple, S.GraphFeatures] = {}

    @classmethod
    def initialize(cls, cfg: ModelConfig, seed: int | None = None) -> "GedModel":
        rng = np.random.default_rng(cfg.seed if seed is None else seed)
        params = S.init_params(cfg.segcn, rng)
        params.update(M.init_params(cfg.segcn.hidden, rng))
        return cls(cfg, params)

    def copy_params(self) -> dict[str, T.Tensor]:
        return {k: T.Tensor(v.data.copy(), requires_grad=True, name=k) for k, v in self.params.items()}

    def features(self, g: Graph) -> S.GraphFeatures:
        key = (g.id, g.nodes, tuple(g.edges.items()))
        f = self._features.get(key)
        if f is None:
            f = S.graph_features(g, self.cfg.segcn, self.cfg.seed)
            self._features[key] = f
        return f

    def make_batch(self, pairs: list[GraphPair]) -> PairBatch:
        slots: dict[int, int] = {}
        graphs: list[Graph] = []

        def slot(g):
            key = id(g)
            if key not in slots:
                slots[key] = len(graphs)
                graphs.append(g)
            return slots[key]

        g1_index = np.array([slot(p.g1) for p in pairs], dtype=np.int64)
        g2_index = np.array([slot(p.g2) for p in pairs], dtype=np.int64)
        feats = S.stack([self.features(g) for g in graphs])
        off = feats.offsets
        src, tgt, seg, start = [], [], [], []
        pos = 0
        for p, pair in enumerate(pairs):
            n1, n2 = pair.n1, pair.n2
            start.append(pos)
            src.append(np.repeat(np.arange(n1), n2) + off[g1_index[p]])
            tgt.append(np.tile(np.arange(n2), n1) + off[g2_index[p]])
            seg.append(np.full(n1 * n2, p))
            pos += n1 * n2
        sizes = np.diff(off)
        rows = np.repeat(np.arange(len(graphs)), sizes)
        pooling = sp.csr_matrix((1.0 / sizes[rows], (rows, np.arange(off[-1]))), shape=(len(graphs), off[-1]))
        return PairBatch(
            pairs,
            feats,
            g1_index,
            g2_index,
            np.concatenate(src),
            np.concatenate(tgt),
            np.concatenate(seg),
            np.asarray(start, dtype=np.int64),
            pooling,
        )

    def forward(self, pairs, batch: PairBatch | None = None, params=None, max_iter=None, tol="default") -> ModelOutput:
        params = self.params if params is None else params
        batch = batch or self.make_batch(list(pairs))
        h0, hl = S.embed(batch.features, params, self.cfg.segcn)
        wn = params["matching.wn"]
        s0 = M.cell_similarity(h0, wn, batch.src, batch.tgt)
        sl = M.cell_similarity(hl, wn, batch.src, batch.tgt)
        ks = [keep_mass(self.cfg.k, p.n1, p.n2) for p in batch.pairs]
        it = self.cfg.max_iter if max_iter is None else max_iter
        tl = self.cfg.tol if tol == "default" else tol
        a0 = M.sinkhorn_topk_cells(s0, batch.segments, batch.size, ks, self.cfg.epsilon, tl, it).keep
        al = M.sinkhorn_topk_cells(sl, batch.segments, batch.size, ks, self.cfg.epsilon, tl, it).keep
        pool0 = T.spmatmul(batch.pooling, h0)
        pooll = T.spmatmul(batch.pooling, hl)
        d_pred = M.ged_head(pool0, pooll, batch.g1_index, batch.g2_index, params)
        return ModelOutput(batch, s0, sl, a0, al, d_pred)

    def predict(self, pairs: list[GraphPair], k: int | None = None) -> list[tuple[float, CandidateSet]]:
        """Frozen-parameter inference: predicted similarity and candidate set per pair."""
        frozen = {n: T.Tensor(p.data) for n, p in self.params.items()}
        out = self.forward(pairs, params=frozen)
        k = self.cfg.k if k is None else k
        res = []
        for p, pair in enumerate(out.batch.pairs):
            a0, al = out.assignment(p)
            cand = M.greedy_candidates(a0, al, min(k, pair.n2))
            res.append((float(out.d_pred.data[p]), cand))
        return res

    def save(self, path) -> None:
        Path(path).write_text(T.dumps_checkpoint(self.params, self.cfg.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "GedModel":
        params, meta = T.loads_checkpoint(Path(path).read_text(encoding="utf-8"))
        return cls(ModelConfig.from_dict(meta), params)
