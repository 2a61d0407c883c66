"""Structure-enhanced node embeddings.

Each node gets a one-hot label, a learned degree embedding and a random-walk
landing-probability encoding summed over the original graph and two
edge-perturbed copies. An MLP maps the concatenation to the local view
``h0``; a stack of GCN layers with self-loops gives the high-order view ``hl``.

Several graphs can be embedded at once: they are stacked into one
block-diagonal graph, which is exactly equivalent to embedding them one by one.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

from . import tensor as T
from .graph import Graph, PerturbMode, perturb_edges


@dataclass
class SegcnConfig:
    labels: tuple[str, ...] = ("",)
    hidden: int = 64
    degree_dim: int = 16
    layers: int = 3
    walk_steps: int = 16
    perturb_fraction: float = 0.1
    max_degree: int = 32

    def __post_init__(self):
        self.labels = tuple(self.labels)
        if self.layers < 1 or self.walk_steps < 1:
            raise ValueError("layers and walk_steps must be >= 1")

    @property
    def input_dim(self) -> int:
        return len(self.labels) + self.degree_dim + self.walk_steps

    def to_dict(self) -> dict:
        d = asdict(self)
        d["labels"] = list(self.labels)
        return d


def init_params(cfg: SegcnConfig, rng: np.random.Generator) -> dict[str, T.Tensor]:
    d = cfg.hidden
    p = {
        "segcn.degree_table": T.glorot((cfg.max_degree + 1, cfg.degree_dim), rng),
        "segcn.mlp.w1": T.glorot((cfg.input_dim, d), rng),
        "segcn.mlp.b1": T.bias(d),
        "segcn.mlp.w2": T.glorot((d, d), rng),
        "segcn.mlp.b2": T.bias(d),
    }
    for m in range(cfg.layers):
        p[f"segcn.gcn.w{m + 1}"] = T.glorot((d, d), rng)
    for name, t in p.items():
        t.name = name
    return p


def walk_diagonals(g: Graph, t: int) -> np.ndarray:
    """Diagonals of ``R^1..R^t`` for ``R = A D^-1``; isolated-node columns are zero."""
    a = g.adjacency_matrix()
    deg = a.sum(axis=0)
    inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    r = a * inv[None, :]
    out = np.zeros((g.n, t))
    power = np.eye(g.n)
    for step in range(t):
        power = power @ r
        out[:, step] = np.diag(power)
    return out


def perturbation_seeds(seed: int) -> tuple[int, int]:
    ss = np.random.SeedSequence(seed)
    a, b = ss.spawn(2)
    return int(a.generate_state(1)[0]), int(b.generate_state(1)[0])


def rw_position_encoding(g: Graph, t: int, perturb_fraction: float, seed: int) -> np.ndarray:
    """Random-walk encoding summed over ``g`` and its edge-inserted and edge-removed copies."""
    s_in, s_re = perturbation_seeds(seed)
    g_in = perturb_edges(g, perturb_fraction, PerturbMode.INSERT, s_in)
    g_re = perturb_edges(g, perturb_fraction, PerturbMode.REMOVE, s_re)
    return walk_diagonals(g, t) + walk_diagonals(g_in, t) + walk_diagonals(g_re, t)


def graph_seed(g: Graph, seed: int) -> int:
    """Per-graph perturbation seed, derived from the graph id so it is order independent."""
    h = np.frombuffer(g.id.encode("utf-8"), dtype=np.uint8)
    return int(np.random.SeedSequence([seed, len(h)] + h.tolist()).generate_state(1)[0])


@dataclass
class GraphFeatures:
    """Constant per-node inputs of one graph."""

    onehot: np.ndarray
    degree: np.ndarray
    position: np.ndarray
    norm_adj: sp.csr_matrix

    @property
    def n(self) -> int:
        return self.onehot.shape[0]


def normalized_adjacency(g: Graph) -> sp.csr_matrix:
    """``D~^-1/2 (A + I) D~^-1/2`` with ``D~`` the degree plus one."""
    a = sp.csr_matrix(g.adjacency_matrix()) + sp.identity(g.n, format="csr")
    s = 1.0 / np.sqrt(np.asarray(a.sum(axis=1)).ravel())
    return sp.csr_matrix(sp.diags(s) @ a @ sp.diags(s))


def graph_features(g: Graph, cfg: SegcnConfig, seed: int = 0, position=None) -> GraphFeatures:
    index = {lab: i for i, lab in enumerate(cfg.labels)}
    onehot = np.zeros((g.n, len(cfg.labels)))
    for i, lab in enumerate(g.nodes):
        if lab not in index:
            raise ValueError(f"label {lab!r} outside the model alphabet")
        onehot[i, index[lab]] = 1.0
    degree = np.minimum(g.degrees(), cfg.max_degree)
    if position is None:
        position = rw_position_encoding(g, cfg.walk_steps, cfg.perturb_fraction, graph_seed(g, seed))
    return GraphFeatures(onehot, degree, position, normalized_adjacency(g))


@dataclass
class BatchFeatures:
    onehot: np.ndarray
    degree: np.ndarray
    position: np.ndarray
    norm_adj: sp.csr_matrix
    offsets: np.ndarray  # node offset of each graph, plus the total at the end

    @property
    def num_graphs(self) -> int:
        return len(self.offsets) - 1


def stack(feats: list[GraphFeatures]) -> BatchFeatures:
    offsets = np.concatenate([[0], np.cumsum([f.n for f in feats])]).astype(np.int64)
    return BatchFeatures(
        onehot=np.vstack([f.onehot for f in feats]),
        degree=np.concatenate([f.degree for f in feats]),
        position=np.vstack([f.position for f in feats]),
        norm_adj=sp.block_diag([f.norm_adj for f in feats], format="csr"),
        offsets=offsets,
    )


def local_embeddings(batch: BatchFeatures, params: dict) -> T.Tensor:
    deg = T.take_rows(params["segcn.degree_table"], batch.degree)
    x = T.concat([T.Tensor(batch.onehot), deg, T.Tensor(batch.position)], axis=1)
    h = T.relu(x @ params["segcn.mlp.w1"] + params["segcn.mlp.b1"])
    return h @ params["segcn.mlp.w2"] + params["segcn.mlp.b2"]


def gcn_forward(batch: BatchFeatures, h0: T.Tensor, params: dict, layers: int) -> T.Tensor:
    h = h0
    for m in range(layers):
        h = T.relu(T.spmatmul(batch.norm_adj, h @ params[f"segcn.gcn.w{m + 1}"]))
    return h


def embed(batch: BatchFeatures, params: dict, cfg: SegcnConfig) -> tuple[T.Tensor, T.Tensor]:
    h0 = local_embeddings(batch, params)
    return h0, gcn_forward(batch, h0, params, cfg.layers)
