"""Dense tableau simplex for ``max c^T x  s.t.  A x <= b, x >= 0`` with ``b >= 0``.

The origin is feasible under ``b >= 0``, so no phase one is needed. Bland's
rule picks both entering and leaving variables, which rules out cycling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LpResult:
    status: str  # "optimal" | "unbounded" | "iteration_limit"
    x: np.ndarray
    objective: float
    slack: np.ndarray
    pivots: int


def simplex_max(c, A, b, tol: float = 1e-11, max_pivots: int = 50_000) -> LpResult:
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    if np.any(b < 0):
        raise ValueError("simplex_max needs b >= 0 (origin must be feasible)")
    # columns: n structural, m slack, then rhs
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n : n + m] = np.eye(m)
    T[:m, -1] = b
    T[m, :n] = -c
    basis = np.arange(n, n + m)
    scale = max(1.0, float(np.abs(c).max(initial=0.0)))
    pivots = 0
    status = "optimal"
    while True:
        reduced = T[m, :-1]
        cand = np.flatnonzero(reduced < -tol * scale)
        if cand.size == 0:
            break
        if pivots >= max_pivots:
            status = "iteration_limit"
            break
        j = int(cand[0])
        col = T[:m, j]
        col_tol = tol * max(1.0, float(np.abs(col).max()))
        rows = np.flatnonzero(col > col_tol)
        if rows.size == 0:
            status = "unbounded"
            break
        ratios = T[rows, -1] / col[rows]
        best = ratios.min()
        ties = rows[ratios <= best + tol * max(1.0, abs(best))]
        i = int(ties[np.argmin(basis[ties])])
        T[i] /= T[i, j]
        others = np.arange(m + 1) != i
        T[others] -= np.outer(T[others, j], T[i])
        basis[i] = j
        np.maximum(T[:m, -1], 0.0, out=T[:m, -1])  # rounding can push rhs just below 0
        pivots += 1
    x_full = np.zeros(n + m)
    x_full[basis] = T[:m, -1]
    x = x_full[:n]
    slack = b - A @ x
    return LpResult(status, x, float(c @ x), slack, pivots)
