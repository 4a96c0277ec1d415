"""Forward auction for the square max-benefit assignment problem.

Benefits are real, -inf marks a forbidden pairing. Epsilon scaling starts
coarse and tightens geometrically; within each phase unassigned rows bid in
FIFO order starting from the lowest index, and value ties resolve to the
lowest column index, so the result is deterministic. The final epsilon is far
below any weight gap arising from generic inputs, making the assignment
exactly optimal there; in general it is optimal to within n * final epsilon.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from .errors import DomainError, NumericalError

_SCALE_FACTOR = 5.0
_MAX_BIDS = 5_000_000


def auction_assignment(benefit: np.ndarray, eps_min: float | None = None) -> np.ndarray:
    """Maximize sum(benefit[i, col[i]]) over permutations; returns col per row."""
    b = np.asarray(benefit, dtype=float)
    if b.ndim != 2 or b.shape[0] != b.shape[1]:
        raise DomainError("auction_assignment expects a square benefit matrix")
    k = b.shape[0]
    if k == 0:
        return np.zeros(0, dtype=int)
    if np.any(np.isnan(b)) or np.any(b == np.inf):
        raise DomainError("benefits must be finite or -inf")
    finite = b[np.isfinite(b)]
    if finite.size == 0:
        raise DomainError("no allowed assignment entries")
    span = float(finite.max() - finite.min())
    if eps_min is None:
        eps_min = 1e-12 * max(1.0, span)
    big = span + 1.0

    prices = np.zeros(k)
    row_to_col = np.full(k, -1, dtype=int)
    eps = max(span / 2.0, eps_min)
    bids = 0
    while True:
        row_to_col[:] = -1
        col_to_row = np.full(k, -1, dtype=int)
        queue = deque(range(k))
        while queue:
            bids += 1
            if bids > _MAX_BIDS:
                raise NumericalError("auction_assignment: bid cap exceeded")
            i = queue.popleft()
            values = b[i] - prices
            j = int(np.argmax(values))
            v_best = values[j]
            if v_best == -np.inf:
                raise NumericalError(f"auction_assignment: row {i} has no feasible column")
            values_rest = values.copy()
            values_rest[j] = -np.inf
            v_second = float(values_rest.max())
            raise_by = (v_best - v_second if np.isfinite(v_second) else big) + eps
            prices[j] += raise_by
            prev = col_to_row[j]
            if prev >= 0:
                row_to_col[prev] = -1
                queue.append(prev)
            col_to_row[j] = i
            row_to_col[i] = j
        if eps <= eps_min:
            break
        eps = max(eps / _SCALE_FACTOR, eps_min)
    return row_to_col


def assignment_value(benefit: np.ndarray, row_to_col: np.ndarray) -> float:
    return float(sum(benefit[i, j] for i, j in enumerate(row_to_col)))
