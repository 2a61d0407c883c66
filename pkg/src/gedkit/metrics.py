"""Evaluation metrics for predicted edit distances.

Rankings are built on the normalized similarity ``exp(-2 ged / (n1 + n2))``
so pairs of different sizes are comparable within a query.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Hashable, Sequence

import numpy as np
from scipy import stats

SIM = "sim"
NDIST = "ndist"


@dataclass
class MetricsReport:
    acc: float
    mae: float
    mse: float
    p_at_10: float | None
    p_at_20: float | None
    rho: float | None
    tau: float | None
    mean_time: float | None
    pairs: int
    queries: int = 0
    skipped: dict = field(default_factory=dict)  # queries left out per metric

    def to_dict(self) -> dict:
        return asdict(self)

    def table(self) -> str:
        def fmt(v, spec):
            return "n/a" if v is None else format(v, spec)

        rows = [
            ("pairs", str(self.pairs)),
            ("ACC (%)", fmt(self.acc, ".2f")),
            ("MAE", fmt(self.mae, ".6f")),
            ("MSE", fmt(self.mse, ".6f")),
            ("p@10", fmt(self.p_at_10, ".4f")),
            ("p@20", fmt(self.p_at_20, ".4f")),
            ("rho", fmt(self.rho, ".4f")),
            ("tau", fmt(self.tau, ".4f")),
            ("time/pair (s)", fmt(self.mean_time, ".6f")),
        ]
        width = max(len(r[0]) for r in rows)
        return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)


def similarity(ged, n1, n2):
    return np.exp(-2.0 * np.asarray(ged, dtype=float) / (np.asarray(n1) + np.asarray(n2)))


def precision_at_k(pred_sim: Sequence[float], true_sim: Sequence[float], k: int) -> float:
    """Overlap of the predicted top-``k`` with the true top-``k``, divided by ``k``.

    The predicted top-``k`` breaks ties by position. The true set includes every
    item tied with the ``k``-th best true similarity, so a perfect prediction
    always scores 1.
    """
    pred_sim = np.asarray(pred_sim, dtype=float)
    true_sim = np.asarray(true_sim, dtype=float)
    if len(pred_sim) < k:
        raise ValueError(f"need at least {k} items")
    top_pred = np.argsort(-pred_sim, kind="stable")[:k]
    kth = np.sort(true_sim)[::-1][k - 1]
    top_true = np.flatnonzero(true_sim >= kth)
    return len(np.intersect1d(top_pred, top_true)) / k


def _nan_to_none(x):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else float(x)


def compute_metrics(
    predicted: Sequence[float],
    truth: Sequence[int],
    sizes: Sequence[tuple[int, int]],
    queries: Sequence[Sequence[Hashable]] | Sequence[Hashable] | None = None,
    times: Sequence[float] | None = None,
    error_scale: str = SIM,
) -> MetricsReport:
    """Accuracy, errors and per-query ranking quality of predicted distances.

    ``queries[i]`` names the query graph(s) pair ``i`` belongs to (a single
    key or a tuple of keys; a pair can serve several queries). Without
    ``queries`` all pairs form one query. p@k skips queries with fewer than
    ``k`` partners and the rank correlations skip queries with fewer than two
    partners or a constant ranking; the skip counts are in ``skipped``.
    """
    pred = np.asarray(predicted, dtype=float)
    true = np.asarray(truth, dtype=float)
    if pred.shape != true.shape or len(sizes) != len(pred):
        raise ValueError("predictions, labels and sizes must be aligned")
    if error_scale not in (SIM, NDIST):
        raise ValueError(f"error_scale must be {SIM!r} or {NDIST!r}")
    n = len(pred)
    if n == 0:
        raise ValueError("no pairs to evaluate")
    n1 = np.array([s[0] for s in sizes], dtype=float)
    n2 = np.array([s[1] for s in sizes], dtype=float)
    pred_sim = similarity(pred, n1, n2)
    true_sim = similarity(true, n1, n2)
    if error_scale == SIM:
        err = pred_sim - true_sim
    else:
        err = 2.0 * (pred - true) / (n1 + n2)
    acc = 100.0 * float(np.mean(np.abs(pred - true) < 1e-9))

    groups: dict = defaultdict(list)
    for i in range(n):
        keys = ("all",) if queries is None else queries[i]
        if isinstance(keys, (str, bytes)) or not isinstance(keys, (tuple, list)):
            keys = (keys,)
        for key in keys:
            groups[key].append(i)

    p10, p20, rhos, taus = [], [], [], []
    skipped = {"p_at_10": 0, "p_at_20": 0, "rho": 0, "tau": 0}
    for idx in groups.values():
        ps, ts = pred_sim[idx], true_sim[idx]
        for k, bucket, name in ((10, p10, "p_at_10"), (20, p20, "p_at_20")):
            if len(idx) >= k:
                bucket.append(precision_at_k(ps, ts, k))
            else:
                skipped[name] += 1
        constant = len(idx) < 2 or np.all(ps == ps[0]) or np.all(ts == ts[0])
        if constant:
            skipped["rho"] += 1
            skipped["tau"] += 1
            continue
        rhos.append(stats.spearmanr(ps, ts).statistic)
        taus.append(stats.kendalltau(ps, ts, variant="b").statistic)

    def avg(xs):
        return float(np.mean(xs)) if xs else None

    return MetricsReport(
        acc=acc,
        mae=float(np.mean(np.abs(err))),
        mse=float(np.mean(err**2)),
        p_at_10=avg(p10),
        p_at_20=avg(p20),
        rho=_nan_to_none(avg(rhos)),
        tau=_nan_to_none(avg(taus)),
        mean_time=None if times is None else float(np.mean(times)),
        pairs=n,
        queries=len(groups),
        skipped=skipped,
    )
