"""Exact rectangular assignment by min-cost max-flow.

The assignment of ``K`` rows to ``N >= K`` columns is the flow problem on

    source -> row_i        (capacity 1, cost 0)
    row_i  -> column_j     (capacity 1, cost C[i, j])
    column_j -> sink       (capacity 1, cost 0)

solved by successive shortest augmenting paths. Node potentials ``u`` (rows)
and ``v`` (columns) keep every residual arc's reduced cost
``C[i, j] - u[i] - v[j]`` nonnegative, so each shortest path is a Dijkstra
search even when ``C`` has negative entries. Each augmentation pushes one unit
of flow from the source through a new row; after ``K`` augmentations the flow
is maximal and, by the potential argument, of minimum cost.

The Dijkstra search runs over the dense column set with numpy, which makes a
solve ``O(K^2 N)`` elementwise work in ``O(K^2)`` vector operations.
"""

from __future__ import annotations

import numpy as np


class InfeasibleMatchingError(ValueError):
    """Fewer columns than rows: no one-to-one assignment exists."""


def mcmf_assign(cost):
    """Return ``cols`` with ``cols[i]`` the column assigned to row ``i``.

    The columns are pairwise distinct and ``cost[arange(K), cols].sum()`` is
    minimal over all one-to-one assignments.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    n_rows, n_cols = cost.shape
    if n_cols < n_rows:
        raise InfeasibleMatchingError(f"{n_rows} rows cannot be matched to {n_cols} distinct columns")
    if not np.all(np.isfinite(cost)):
        raise ValueError("costs must be finite")

    u = np.zeros(n_rows)
    v = np.zeros(n_cols)
    row_of_col = np.full(n_cols, -1)
    col_of_row = np.full(n_rows, -1)

    for cur in range(n_rows):
        dist = np.full(n_cols, np.inf)
        pred = np.full(n_cols, -1)
        scanned = np.zeros(n_cols, dtype=bool)
        i = cur
        d_i = 0.0  # distance of row node i from the source
        sink_col = -1
        while True:
            # relax arcs row i -> every unscanned column
            cand = d_i + cost[i] - u[i] - v
            better = (~scanned) & (cand < dist)
            dist[better] = cand[better]
            pred[better] = i
            masked = np.where(scanned, np.inf, dist)
            j = int(np.argmin(masked))
            scanned[j] = True
            if row_of_col[j] == -1:
                sink_col = j
                break
            # matched column: the residual arc column -> its row has reduced cost 0
            i = row_of_col[j]
            d_i = dist[j]

        d_end = dist[sink_col]
        # potential update keeps reduced costs nonnegative on the new residual graph
        u[cur] += d_end
        sc = np.nonzero(scanned)[0]
        for j in sc:
            if j != sink_col:
                u[row_of_col[j]] += d_end - dist[j]
        v[sc] -= d_end - dist[sc]

        j = sink_col
        while True:
            i = pred[j]
            row_of_col[j] = i
            prev = col_of_row[i]
            col_of_row[i] = j
            if i == cur:
                break
            j = prev

    return col_of_row


def assignment_cost(cost, cols) -> float:
    cost = np.asarray(cost, dtype=float)
    return float(cost[np.arange(cost.shape[0]), cols].sum())
