"""Bipartite-relaxation GED baselines.

A padded ``(n1 + n2)`` square cost matrix is built from node labels and
degrees, solved as a linear sum assignment problem (Kuhn-Munkres or
Jonker-Volgenant), and the induced node matching is evaluated exactly.
"""

from __future__ import annotations

import time

import numpy as np

from .graph import GraphPair
from .search import GedResult, NodeMatching, mapping_edit_cost, normalized_similarity

HUNGARIAN = "hungarian"
VJ = "vj"


def build_cost_matrix(pair: GraphPair) -> np.ndarray:
    """Square cost matrix with substitution, deletion, insertion and zero blocks.

    Rows ``0..n1-1`` are source nodes, rows ``n1..`` are insertion slots;
    columns ``0..n2-1`` are target nodes, columns ``n2..`` are deletion slots.
    Forbidden cells hold ``inf``.
    """
    g1, g2 = pair.g1, pair.g2
    n1, n2 = g1.n, g2.n
    d1 = g1.degrees().astype(float)
    d2 = g2.degrees().astype(float)
    lab1 = np.array(g1.nodes, dtype=object)
    lab2 = np.array(g2.nodes, dtype=object)
    c = np.full((n1 + n2, n2 + n1), np.inf)
    c[:n1, :n2] = (lab1[:, None] != lab2[None, :]).astype(float) + 0.5 * np.abs(d1[:, None] - d2[None, :])
    c[np.arange(n1), n2 + np.arange(n1)] = 1.0 + 0.5 * d1
    c[n1 + np.arange(n2), np.arange(n2)] = 1.0 + 0.5 * d2
    c[n1:, n2:] = 0.0
    return c


def _finite_copy(c: np.ndarray) -> tuple[np.ndarray, float]:
    c = np.asarray(c, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError("cost matrix must be square")
    if np.isnan(c).any():
        raise ValueError("cost matrix contains NaN")
    finite = np.isfinite(c)
    if not finite.any(axis=1).all() or not finite.any(axis=0).all():
        raise ValueError("infeasible cost matrix: a row or column has no finite entry")
    if finite.all():
        return c.copy(), np.inf
    span = np.abs(c[finite]).max() if finite.any() else 0.0
    big = (span + 1.0) * (c.shape[0] + 1)
    out = np.where(finite, c, big)
    return out, big


def _check_feasible(c_orig: np.ndarray, perm: np.ndarray) -> None:
    if not np.isfinite(np.asarray(c_orig, float)[np.arange(len(perm)), perm]).all():
        raise ValueError("infeasible cost matrix: no finite perfect assignment")


def hungarian(cost: np.ndarray) -> np.ndarray:
    """Kuhn-Munkres with starred/primed zeros. Returns ``perm`` with row ``i`` -> column ``perm[i]``."""
    c, _ = _finite_copy(cost)
    n = c.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    c -= c.min(axis=1, keepdims=True)
    c -= c.min(axis=0, keepdims=True)
    starred = np.zeros((n, n), dtype=bool)
    primed = np.zeros((n, n), dtype=bool)
    row_cov = np.zeros(n, dtype=bool)
    col_cov = np.zeros(n, dtype=bool)
    eps = 1e-12 * max(1.0, np.abs(c).max())

    for i in range(n):
        for j in np.flatnonzero(np.abs(c[i]) <= eps):
            if not starred[:, j].any():
                starred[i, j] = True
                break

    while True:
        col_cov[:] = starred.any(axis=0)
        if col_cov.all():
            break
        while True:
            # find an uncovered zero
            free = (np.abs(c) <= eps) & ~row_cov[:, None] & ~col_cov[None, :]
            if not free.any():
                mask = ~row_cov[:, None] & ~col_cov[None, :]
                m = c[mask].min()
                c[~row_cov, :] -= m
                c[:, col_cov] += m
                continue
            i, j = np.argwhere(free)[0]
            primed[i, j] = True
            star_cols = np.flatnonzero(starred[i])
            if star_cols.size:
                row_cov[i] = True
                col_cov[star_cols[0]] = False
                continue
            # augmenting path of alternating primes and stars
            path = [(i, j)]
            while True:
                rows = np.flatnonzero(starred[:, path[-1][1]])
                if rows.size == 0:
                    break
                r = rows[0]
                path.append((r, path[-1][1]))
                path.append((r, np.flatnonzero(primed[r])[0]))
            for r, col in path:
                starred[r, col] = not starred[r, col]
            primed[:] = False
            row_cov[:] = False
            col_cov[:] = False
            break
    perm = np.argmax(starred, axis=1)
    _check_feasible(cost, perm)
    return perm


def jonker_volgenant(cost: np.ndarray) -> np.ndarray:
    """Jonker-Volgenant shortest augmenting path LSAP solver.

    Column reduction, reduction transfer and two rounds of augmenting row
    reduction, then Dijkstra-style augmentation for the remaining free rows.
    """
    c, _ = _finite_copy(cost)
    n = c.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    x = np.full(n, -1, dtype=np.int64)  # column of each row
    y = np.full(n, -1, dtype=np.int64)  # row of each column
    v = np.zeros(n)
    matches = np.zeros(n, dtype=np.int64)
    # reduction gaps below this are rounding noise; treating them as ties
    # stops two rows from trading a column forever
    tie = 1e-12 * max(1.0, float(np.abs(c).max()))

    for j in range(n - 1, -1, -1):
        imin = int(np.argmin(c[:, j]))
        v[j] = c[imin, j]
        matches[imin] += 1
        if matches[imin] == 1:
            x[imin] = j
            y[j] = imin
        elif v[j] < v[x[imin]]:
            j1 = x[imin]
            x[imin] = j
            y[j] = imin
            y[j1] = -1

    free = []
    for i in range(n):
        if matches[i] == 0:
            free.append(i)
        elif matches[i] == 1 and n > 1:
            j1 = x[i]
            red = c[i] - v
            red[j1] = np.inf
            v[j1] -= red.min()

    for _ in range(2):
        k = 0
        prev_free = len(free)
        todo = free
        free = []
        while k < prev_free:
            i = todo[k]
            k += 1
            red = c[i] - v
            j1 = int(np.argmin(red))
            umin = red[j1]
            if n > 1:
                red2 = red.copy()
                red2[j1] = np.inf
                j2 = int(np.argmin(red2))
                usubmin = red2[j2]
            else:
                j2, usubmin = j1, np.inf
            i0 = y[j1]
            strict = usubmin - umin > tie
            if strict:
                v[j1] -= usubmin - umin
            elif i0 >= 0:
                j1 = j2
                i0 = y[j2]
            if i0 >= 0:
                x[i0] = -1
            x[i] = j1
            y[j1] = i
            if i0 >= 0:
                if strict:
                    k -= 1
                    todo[k] = i0
                else:
                    free.append(i0)

    for freerow in free:
        d = c[freerow] - v
        pred = np.full(n, freerow, dtype=np.int64)
        collist = list(range(n))
        low = up = 0
        last = 0
        endofpath = -1
        dmin = 0.0
        while endofpath < 0:
            if up == low:
                last = low - 1
                dmin = d[collist[up]]
                up += 1
                for kk in range(up, n):
                    j = collist[kk]
                    h = d[j]
                    if h <= dmin:
                        if h < dmin:
                            up = low
                            dmin = h
                        collist[kk] = collist[up]
                        collist[up] = j
                        up += 1
                for kk in range(low, up):
                    if y[collist[kk]] < 0:
                        endofpath = collist[kk]
                        break
            if endofpath < 0:
                j1 = collist[low]
                low += 1
                i = y[j1]
                u1 = c[i, j1] - v[j1] - dmin
                for kk in range(up, n):
                    j = collist[kk]
                    v2 = c[i, j] - v[j] - u1
                    if v2 < d[j]:
                        pred[j] = i
                        if v2 == dmin:
                            if y[j] < 0:
                                endofpath = j
                                break
                            collist[kk] = collist[up]
                            collist[up] = j
                            up += 1
                        d[j] = v2
        for kk in range(last + 1):
            j1 = collist[kk]
            v[j1] += d[j1] - dmin
        while True:
            i = pred[endofpath]
            y[endofpath] = i
            j1 = endofpath
            endofpath = x[i]
            x[i] = j1
            if i == freerow:
                break

    _check_feasible(cost, x)
    return x


def solve_assignment(cost: np.ndarray, method: str = HUNGARIAN) -> np.ndarray:
    method = method.lower()
    if method == HUNGARIAN:
        return hungarian(cost)
    if method in (VJ, "jv"):
        return jonker_volgenant(cost)
    raise ValueError(f"unknown assignment method {method!r}")


def assignment_cost(cost: np.ndarray, perm: np.ndarray) -> float:
    cost = np.asarray(cost, float)
    return float(cost[np.arange(len(perm)), perm].sum())


def induced_matching(pair: GraphPair, cost: np.ndarray, perm: np.ndarray) -> list[int]:
    """Source-to-target injection from an assignment.

    Source nodes the assignment sent to deletion slots are re-attached, in
    index order, to the cheapest still-free target by substitution cost.
    """
    n1, n2 = pair.n1, pair.n2
    assigned = [-1] * n1
    taken = set()
    for i in range(n1):
        j = int(perm[i])
        if j < n2:
            assigned[i] = j
            taken.add(j)
    for i in range(n1):
        if assigned[i] < 0:
            free = [k for k in range(n2) if k not in taken]
            k = min(free, key=lambda t: (cost[i, t], t))
            assigned[i] = k
            taken.add(k)
    return assigned


def tie_broken(c: np.ndarray, n1: int, n2: int) -> np.ndarray:
    """Prefer keeping node indices among equally cheap assignments.

    Every entry of the cost matrix is a multiple of 1/2, so distinct
    assignment costs differ by at least 1/2. A penalty below ``1/(2 n1)`` on
    each off-diagonal substitution stays under that gap in total and only
    reorders ties.
    """
    out = c.copy()
    off = ~np.eye(n1, n2, dtype=bool)
    out[:n1, :n2][off] += 0.5 / (n1 + 1)
    return out


def bipartite_ged(pair: GraphPair, method: str = HUNGARIAN) -> GedResult:
    start = time.perf_counter()
    c = build_cost_matrix(pair)
    perm = solve_assignment(tie_broken(c, pair.n1, pair.n2), method)
    assigned = induced_matching(pair, c, perm)
    dist = mapping_edit_cost(pair, assigned)
    return GedResult(
        distance=dist,
        normalized_similarity=normalized_similarity(dist, pair.n1, pair.n2),
        matching=NodeMatching(assigned, dist),
        elapsed=time.perf_counter() - start,
    )
