"""Augmenting-path bipartite matching with incremental repair."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


def augment(
    start: int,
    neighbors: Callable[[int], Sequence[int]],
    col_of_row: np.ndarray,
    row_of_col: np.ndarray,
) -> bool:
    """Try to match the free row ``start`` along one augmenting path.

    ``neighbors(r)`` lists the columns adjacent to row ``r``.  The matching
    arrays (``-1`` = free) are updated in place.  Iterative DFS, so deep
    paths do not hit the recursion limit.
    """
    visited: set[int] = set()
    parent: dict[int, int] = {}
    stack = [(start, iter(neighbors(start)))]
    while stack:
        r, it = stack[-1]
        for c in it:
            c = int(c)
            if c in visited:
                continue
            visited.add(c)
            parent[c] = r
            owner = int(row_of_col[c])
            if owner == -1:
                while True:
                    pr = parent[c]
                    prev = int(col_of_row[pr])
                    col_of_row[pr] = c
                    row_of_col[c] = pr
                    if pr == start:
                        return True
                    c = prev
            stack.append((owner, iter(neighbors(owner))))
            break
        else:
            stack.pop()
    return False


class DenseMatcher:
    """Perfect matching on the positive entries of a square matrix.

    The matching survives edits of the matrix; :meth:`repair` re-matches only
    rows whose matched entry dropped to zero.
    """

    def __init__(self, matrix: np.ndarray):
        self.matrix = matrix
        n = matrix.shape[0]
        self.col_of_row = np.full(n, -1, dtype=np.int64)
        self.row_of_col = np.full(n, -1, dtype=np.int64)

    def _neighbors(self, r: int):
        cols = np.flatnonzero(self.matrix[r] > 0)
        free = self.row_of_col[cols] == -1
        # trying free columns first keeps most paths of length one
        return np.concatenate((cols[free], cols[~free]))

    def repair(self) -> bool:
        n = self.matrix.shape[0]
        matched = self.col_of_row >= 0
        rows = np.arange(n)
        stale = matched & (self.matrix[rows, np.where(matched, self.col_of_row, 0)] <= 0)
        for r in np.flatnonzero(stale):
            self.row_of_col[self.col_of_row[r]] = -1
            self.col_of_row[r] = -1
        for r in np.flatnonzero(self.col_of_row == -1):
            if not augment(int(r), self._neighbors, self.col_of_row, self.row_of_col):
                return False
        return True


def maximum_matching(adj: Sequence[Sequence[int]], n_cols: int) -> np.ndarray:
    """Maximum matching of a bipartite graph given by row adjacency lists.

    Returns ``col_of_row`` with ``-1`` for unmatched rows.
    """
    col_of_row = np.full(len(adj), -1, dtype=np.int64)
    row_of_col = np.full(n_cols, -1, dtype=np.int64)
    for r in range(len(adj)):
        augment(r, lambda x: adj[x], col_of_row, row_of_col)
    return col_of_row
