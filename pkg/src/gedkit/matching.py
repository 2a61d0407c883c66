"""Node-matching head: similarity matrices, differentiable top-k, candidates, losses.

The batched functions work on *cells*: every (source node, target node)
combination of every pair in a batch, flattened row-major per pair and
concatenated across pairs. ``segments`` gives the pair index of each cell.
No padding is involved; each pair keeps its own ``n1 x n2`` block.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import tensor as T

SINKHORN_EPSILON = 0.05
SINKHORN_TOL = 1e-6
SINKHORN_MAX_ITER = 100
PROB_FLOOR = 1e-12


def similarity_matrices(e1, e2, wn):
    """``sigmoid(h1 W h2^T)`` for the local and high-order views, sharing ``W``.

    ``e1`` and ``e2`` are ``(h0, hl)`` pairs of tensors/arrays of shape ``(n, d)``.
    """
    wn = T.as_tensor(wn)
    out = []
    for a, b in zip(e1, e2):
        a, b = T.as_tensor(a), T.as_tensor(b)
        if a.shape[1] != wn.shape[0] or b.shape[1] != wn.shape[1]:
            raise ValueError(f"embedding width mismatch: {a.shape}, {wn.shape}, {b.shape}")
        out.append(T.sigmoid(a @ wn @ b.T))
    return tuple(out)


def cell_similarity(h, wn, src, tgt):
    """Batched similarity: ``sigmoid(<h[src] W, h[tgt]>)`` per cell."""
    if h.shape[1] != wn.shape[0]:
        raise ValueError("embedding width mismatch")
    left = T.take_rows(h @ wn, src)
    right = T.take_rows(h, tgt)
    return T.sigmoid(T.reduce_sum(left * right, axis=1))


@dataclass
class SinkhornResult:
    keep: T.Tensor  # per-cell keep probability
    plan: T.Tensor  # cells x 2 transport plan, columns (discard, keep)
    iterations: int
    violation: float
    tol: float | None = None

    @property
    def converged(self) -> bool:
        return self.tol is not None and self.violation < self.tol


def sinkhorn_topk_cells(
    d,
    segments,
    num_segments,
    ks,
    epsilon=SINKHORN_EPSILON,
    tol=SINKHORN_TOL,
    max_iter=SINKHORN_MAX_ITER,
) -> SinkhornResult:
    """Differentiable top-k over each segment of the flat score vector ``d``.

    Every cell is moved to a "discard" bin (cost ``d - d_min``) or a "keep" bin
    (cost ``d_max - d``) with bin capacities ``N - k`` and ``k``. After an
    opening column normalization, row and column normalization alternate in
    the log domain until the largest row-marginal error drops below ``tol``
    or ``max_iter`` is reached.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    d = T.as_tensor(d)
    segments = np.asarray(segments, dtype=np.int64)
    ks = np.asarray(ks, dtype=np.float64)
    sizes = np.bincount(segments, minlength=num_segments).astype(np.float64)
    if np.any(ks < 1) or np.any(ks > sizes):
        raise ValueError("k must satisfy 1 <= k <= number of cells")
    full = ks >= sizes
    # full segments keep everything; any feasible capacities will do there
    cap_keep = np.where(full, sizes / 2.0, ks)
    cap_discard = np.where(full, sizes / 2.0, sizes - ks)
    logc = np.log(np.stack([cap_discard, cap_keep], axis=1))

    if not d.requires_grad:
        return _sinkhorn_numpy(d.data, segments, num_segments, full, logc, epsilon, tol, max_iter)

    # the extrema only shift whole columns, which the opening column
    # normalization cancels exactly, so they carry no gradient (and ties in
    # them no kink)
    dmin = T.segment_min(T.stop_gradient(d), segments, num_segments)
    dmax = T.segment_max(T.stop_gradient(d), segments, num_segments)
    to_discard = T.reshape(d - T.take_rows(dmin, segments), (-1, 1))
    to_keep = T.reshape(T.take_rows(dmax, segments) - d, (-1, 1))
    logits = T.concat([to_discard, to_keep], axis=1) * (-1.0 / epsilon)
    logits = logits - T.take_rows(T.segment_logsumexp(logits, segments, num_segments), segments) + T.Tensor(logc[segments])

    violation = np.inf
    it = 0
    while it < max_iter:
        it += 1
        logits = logits - T.reshape(T.logsumexp(logits, axis=1), (-1, 1))
        col = T.segment_logsumexp(logits, segments, num_segments)
        logits = logits - T.take_rows(col, segments) + T.Tensor(logc[segments])
        violation = float(np.abs(np.exp(logits.data).sum(axis=1) - 1.0).max())
        if tol is not None and violation < tol:
            break
    plan = T.exp(logits)
    keep = T.reshape(T.index(plan, (slice(None), 1)), (-1,))
    if full.any():
        mask = full[segments].astype(np.float64)
        keep = keep * T.Tensor(1.0 - mask) + T.Tensor(mask)
    return SinkhornResult(keep, plan, it, violation, tol)


def _segment_lse(x, segments, num_segments):
    m = T._segment_reduce(np.maximum, x, segments, num_segments, -np.inf)
    s = T._segment_reduce(np.add, np.exp(x - m[segments]), segments, num_segments, 0.0)
    return np.log(s) + m


def _sinkhorn_numpy(d, segments, num_segments, full, logc, epsilon, tol, max_iter):
    """Same iteration as the taped path, without recording gradients."""
    dmin = T._segment_reduce(np.minimum, d, segments, num_segments, np.inf)
    dmax = T._segment_reduce(np.maximum, d, segments, num_segments, -np.inf)
    logits = np.stack([d - dmin[segments], dmax[segments] - d], axis=1) * (-1.0 / epsilon)
    logc_cells = logc[segments]
    if num_segments == 1:
        def col_lse(x):
            m = x.max(axis=0)
            return np.log(np.exp(x - m).sum(axis=0)) + m
    else:
        def col_lse(x):
            return _segment_lse(x, segments, num_segments)[segments]
    logits = logits - col_lse(logits) + logc_cells
    violation = np.inf
    it = 0
    while it < max_iter:
        it += 1
        logits = logits - np.logaddexp(logits[:, 0], logits[:, 1])[:, None]
        logits = logits - col_lse(logits) + logc_cells
        violation = float(np.abs(np.exp(logits).sum(axis=1) - 1.0).max())
        if tol is not None and violation < tol:
            break
    plan = np.exp(logits)
    keep = np.where(full[segments], 1.0, plan[:, 1])
    return SinkhornResult(T.Tensor(keep), T.Tensor(plan), it, violation, tol)


def sinkhorn_topk(s, k, epsilon=SINKHORN_EPSILON, tol=SINKHORN_TOL, max_iter=SINKHORN_MAX_ITER, return_result=False):
    """Keep-probability matrix of the ``k`` largest entries of ``s`` (any 2-D shape)."""
    s = T.as_tensor(s)
    shape = s.shape
    n = int(np.prod(shape))
    if not 1 <= k <= n:
        raise ValueError(f"k={k} out of range for {n} entries")
    res = sinkhorn_topk_cells(T.reshape(s, (-1,)), np.zeros(n, dtype=np.int64), 1, [k], epsilon, tol, max_iter)
    keep = T.reshape(res.keep, shape)
    if return_result:
        return keep, res
    return keep


def _score(a0, al) -> np.ndarray:
    a0 = a0.data if isinstance(a0, T.Tensor) else np.asarray(a0, float)
    if al is None:
        return a0
    al = al.data if isinstance(al, T.Tensor) else np.asarray(al, float)
    return (a0 + al) / 2.0


def _augment_all(allowed, pick, col_owner, order_by_row) -> None:
    """Extend a partial matching to a perfect one with augmenting paths."""
    n = allowed.shape[1]

    def augment(i, seen):
        # a free column ends the path at once; displace picks only when needed
        for j in order_by_row[i]:
            if allowed[i, j] and col_owner[j] < 0:
                pick[i] = j
                col_owner[j] = i
                return True
        for j in order_by_row[i]:
            if not allowed[i, j] or seen[j]:
                continue
            seen[j] = True
            if augment(col_owner[j], seen):
                pick[i] = j
                col_owner[j] = i
                return True
        return False

    for i in range(allowed.shape[0]):
        if pick[i] < 0 and not augment(i, np.zeros(n, dtype=bool)):
            raise AssertionError("regular bipartite graph without a perfect matching")


def greedy_rounds(score: np.ndarray, rounds: int) -> np.ndarray:
    """``rounds`` successive greedy injections; column ``r`` is round ``r``.

    Each round repeatedly takes the largest remaining score whose row and
    column are still free in this round and that was not picked in an earlier
    round. The source rows are padded with ``n2 - n1`` placeholder rows and
    every round is completed, with augmenting paths where the greedy pass
    gets stuck, to a perfect matching of the padded square. Removing one
    perfect matching from a regular bipartite graph leaves a regular graph,
    so a further injective round exists for every ``rounds <= n2``.
    """
    score = np.asarray(score, dtype=float)
    n1, n2 = score.shape
    if rounds > n2:
        raise ValueError(f"k={rounds} exceeds the {n2} target nodes")
    order = np.argsort(-score.ravel(), kind="stable")
    rows, cols = np.divmod(order, n2)
    order_by_row = [np.argsort(-score[i], kind="stable") for i in range(n1)]
    order_by_row += [np.arange(n2)] * (n2 - n1)
    allowed = np.ones((n2, n2), dtype=bool)
    out = np.empty((n1, rounds), dtype=np.int64)
    for r in range(rounds):
        pick = np.full(n2, -1, dtype=np.int64)
        col_owner = np.full(n2, -1, dtype=np.int64)
        left = n1
        for i, j in zip(rows, cols):
            if pick[i] < 0 and col_owner[j] < 0 and allowed[i, j]:
                pick[i] = j
                col_owner[j] = i
                left -= 1
                if left == 0:
                    break
        _augment_all(allowed, pick, col_owner, order_by_row)
        out[:, r] = pick[:n1]
        allowed[np.arange(n2), pick] = False
    return out


def greedy_candidates(a0, al, k: int) -> "CandidateSet":
    """Top-``k`` candidate targets per source node from the mean of both views."""
    score = _score(a0, al)
    if k < 1:
        raise ValueError("k must be >= 1")
    return CandidateSet(greedy_rounds(score, k).tolist())


@dataclass
class CandidateSet:
    """Per-source ordered candidate targets; entry ``r`` of every row forms round ``r``."""

    rows: list

    @property
    def k(self) -> int:
        return min((len(r) for r in self.rows), default=0)

    def truncated(self, k: int) -> "CandidateSet":
        return CandidateSet([list(r[:k]) for r in self.rows])

    def to_json(self, g1: str, g2: str) -> dict:
        return {"g1": g1, "g2": g2, "k": self.k, "candidates": [list(map(int, r)) for r in self.rows]}

    @classmethod
    def from_json(cls, obj) -> "CandidateSet":
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls([list(map(int, r)) for r in obj["candidates"]])

    def check(self, n2: int | None = None) -> None:
        for r in self.rows:
            if len(set(r)) != len(r) or not r:
                raise ValueError("candidate rows must be non-empty and distinct")
            if n2 is not None and any(not 0 <= x < n2 for x in r):
                raise ValueError("candidate outside the target graph")


def mlp(x, params, prefix, layers, final_activation=False):
    for m in range(layers):
        x = x @ params[f"{prefix}.w{m + 1}"] + params[f"{prefix}.b{m + 1}"]
        if m < layers - 1 or final_activation:
            x = T.relu(x)
    return x


def ged_head(pool0, pooll, g1_index, g2_index, params):
    """Predicted normalized similarity of each pair from pooled graph embeddings.

    ``pool0``/``pooll`` are per-graph mean-pooled local/high-order embeddings.
    """
    hg = mlp(T.concat([pool0, pooll], axis=1), params, "matching.graph_mlp", 2)
    pair = T.concat([T.take_rows(hg, g1_index), T.take_rows(hg, g2_index)], axis=1)
    out = mlp(pair, params, "matching.pair_mlp", 3)
    return T.sigmoid(T.reshape(out, (-1,)))


def init_params(hidden: int, rng: np.random.Generator) -> dict:
    d = hidden
    half = max(d // 2, 1)
    shapes = {
        "matching.wn": (d, d),
        "matching.graph_mlp.w1": (2 * d, d),
        "matching.graph_mlp.w2": (d, d),
        "matching.pair_mlp.w1": (2 * d, d),
        "matching.pair_mlp.w2": (d, half),
        "matching.pair_mlp.w3": (half, 1),
    }
    p = {}
    for name, shape in shapes.items():
        p[name] = T.glorot(shape, rng, name)
        if ".w" in name and name != "matching.wn":
            bname = name.replace(".w", ".b")
            p[bname] = T.bias(shape[1], bname)
    return p


def joint_loss(a0, al, witness_cells, d_pred, d_target, num_pairs=None):
    """Matching NLL plus similarity MSE, both averaged over the pairs.

    ``witness_cells`` indexes the cells of every stored witness matching.
    Returns ``(total, ln, lg)`` tensors.
    """
    n = num_pairs if num_pairs is not None else d_pred.shape[0]
    w = np.asarray(witness_cells, dtype=np.int64)
    p0 = T.clip(T.take_rows(a0, w), PROB_FLOOR, 1.0)
    pl = T.clip(T.take_rows(al, w), PROB_FLOOR, 1.0)
    ln = (T.reduce_sum(T.log(p0)) + T.reduce_sum(T.log(pl))) * (-1.0 / n)
    diff = d_pred - T.Tensor(np.asarray(d_target, dtype=float))
    lg = T.reduce_sum(diff * diff) * (1.0 / n)
    return lg + ln, ln, lg
