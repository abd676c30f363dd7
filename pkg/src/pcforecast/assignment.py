"""Minimum-cost assignment with forbidden pairs.

Shortest-augmenting-path solver (Jonker-Volgenant style) over a dense
rectangular cost matrix of non-negative entries. ``np.inf`` marks forbidden
pairs. Forbidden cells are internally priced above any achievable finite
total, so the solver first maximizes the number of finite pairs matched and
then minimizes their total cost; forbidden cells never appear in the result.

Rows are augmented in index order and column scans break ties toward the
lowest index, so the returned pairing is deterministic across runs and
platforms.
"""

from __future__ import annotations

import numpy as np


def solve_assignment(cost) -> list[tuple[int, int]]:
    """Return matched (row, col) pairs sorted by row index.

    ``cost`` is a (U, V) matrix with entries >= 0; ``np.inf`` forbids a pair.
    At most min(U, V) pairs are returned; fewer when forbidden cells make a
    full matching impossible.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError(f"cost matrix must be 2-D, got shape {cost.shape}")
    if np.isnan(cost).any():
        raise ValueError("cost matrix contains NaN")
    num_rows, num_cols = cost.shape
    if num_rows == 0 or num_cols == 0:
        return []
    transposed = num_rows > num_cols
    work = cost.T if transposed else cost
    finite = np.isfinite(work)
    if work[finite].size and work[finite].min() < 0:
        raise ValueError("cost matrix entries must be non-negative")
    # price forbidden cells above any achievable finite total so cardinality
    # over finite pairs dominates cost; they are filtered out at the end
    sentinel = float(work[finite].sum()) + 1.0
    work = np.where(finite, work, sentinel)

    col_of_row = _jonker_volgenant(work)

    pairs = []
    for row, col in enumerate(col_of_row):
        r, c = (col, row) if transposed else (row, col)
        if np.isfinite(cost[r, c]):
            pairs.append((int(r), int(c)))
    pairs.sort()
    return pairs


def _jonker_volgenant(cost: np.ndarray) -> np.ndarray:
    """Optimal full assignment of a finite (U, V) matrix with U <= V."""
    num_rows, num_cols = cost.shape
    u = np.zeros(num_rows)  # row potentials
    v = np.zeros(num_cols)  # column potentials
    row_of_col = np.full(num_cols, -1, dtype=np.int64)
    col_of_row = np.full(num_rows, -1, dtype=np.int64)

    for cur_row in range(num_rows):
        # Dijkstra over reduced costs from cur_row to the nearest free column.
        dist = np.full(num_cols, np.inf)
        reached_via = np.full(num_cols, -1, dtype=np.int64)
        scanned = np.zeros(num_cols, dtype=bool)
        row = cur_row
        base = 0.0
        while True:
            candidate = base + cost[row] - u[row] - v
            better = ~scanned & (candidate < dist)
            dist[better] = candidate[better]
            reached_via[better] = row
            frontier = np.where(scanned, np.inf, dist)
            col = int(np.argmin(frontier))
            scanned[col] = True
            if row_of_col[col] == -1:
                sink = col
                break
            row = int(row_of_col[col])
            base = dist[col]

        # Dual update keeps reduced costs non-negative for future searches.
        path_cost = dist[sink]
        u[cur_row] += path_cost
        scanned[sink] = False
        cols = np.nonzero(scanned)[0]
        for col in cols:
            u[row_of_col[col]] += path_cost - dist[col]
        v[cols] -= path_cost - dist[cols]

        # Flip matched/unmatched edges along the augmenting path.
        col = sink
        while True:
            row = int(reached_via[col])
            row_of_col[col] = row
            col, col_of_row[row] = col_of_row[row], col
            if row == cur_row:
                break
    return col_of_row


def assignment_cost(cost, pairs) -> float:
    cost = np.asarray(cost, dtype=np.float64)
    return float(sum(cost[r, c] for r, c in pairs))
