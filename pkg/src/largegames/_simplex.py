"""Dense tableau simplex for small LPs of the form

    maximize c @ x  subject to  A @ x <= b,  x >= 0,  with b >= 0.

With b >= 0 the slack basis is feasible, so no phase one is needed. Bland's
rule keeps degenerate problems (ours are highly degenerate: most right-hand
sides are zero) from cycling.
"""
from __future__ import annotations

import numpy as np

_EPS = 1e-12
_PIVOT_TOL = 1e-9  # smaller pivots amplify round-off; treat them as zero


class LPError(RuntimeError):
    pass


def simplex_max(c, A, b, max_pivots: int = 10_000):
    """Return ``(value, x)`` at an optimum. Raises LPError if unbounded."""
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    if np.any(b < -_EPS):
        raise LPError("right-hand side must be nonnegative")

    # tableau rows: constraints, last row: reduced costs (-c), last column: rhs
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n : n + m] = np.eye(m)
    T[:m, -1] = np.maximum(b, 0.0)
    T[m, :n] = -c
    basis = list(range(n, n + m))

    for _ in range(max_pivots):
        reduced = T[m, :-1]
        entering = np.nonzero(reduced < -_EPS)[0]
        if entering.size == 0:
            break
        col = int(entering[0])  # Bland: lowest index
        column = T[:m, col]
        pos = column > _PIVOT_TOL
        if not pos.any():
            raise LPError("LP is unbounded")
        ratios = np.full(m, np.inf)
        ratios[pos] = np.maximum(T[:m, -1][pos], 0.0) / column[pos]
        best = ratios.min()
        ties = np.nonzero(ratios <= best + _EPS)[0]
        row = int(min(ties, key=lambda r: basis[r]))  # Bland: lowest basic index leaves
        T[row] /= T[row, col]
        others = np.arange(m + 1) != row
        T[others] -= np.outer(T[others, col], T[row])
        basis[row] = col
    else:
        raise LPError("simplex pivot limit reached")

    x = np.zeros(n + m)
    x[basis] = T[:m, -1]
    # recompute the basic solution from the original data to shed pivot drift
    full = np.hstack([A, np.eye(m)])
    try:
        xb = np.linalg.solve(full[:, basis], b)
    except np.linalg.LinAlgError:
        xb = None
    if xb is not None and np.all(xb >= -1e-9) and np.allclose(xb, x[basis], atol=1e-6):
        x[basis] = np.maximum(xb, 0.0)
    x = x[:n]
    if np.max(A @ x - b, initial=0.0) > 1e-8:
        raise LPError("simplex lost feasibility to round-off")
    return float(c @ x), x
