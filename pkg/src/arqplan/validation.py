"""Input validation helpers shared by the estimators and the library."""

from __future__ import annotations

import numpy as np

__all__ = ["check_allocation", "check_probability_matrix"]


def check_probability_matrix(X: np.ndarray, name: str = "X") -> np.ndarray:
    """Reject entries outside ``[0, 1]``."""
    X = np.asarray(X, dtype=np.float64)
    if X.size and (np.nanmin(X) < 0.0 or np.nanmax(X) > 1.0):
        raise ValueError(f"{name} must hold probabilities/fractions in [0, 1]")
    return X


def check_allocation(q, n_hops: int | None = None, q_sum: int | None = None) -> tuple[int, ...]:
    """Return ``q`` as a tuple of non-negative ints, checking length and total."""
    arr = np.asarray(q)
    if arr.ndim != 1:
        raise ValueError("an allocation must be one-dimensional")
    if arr.size and not np.all(np.equal(np.mod(arr, 1), 0)):
        raise ValueError("allocations must be integers")
    out = tuple(int(x) for x in arr)
    if any(x < 0 for x in out):
        raise ValueError("allocations must be non-negative")
    if n_hops is not None and len(out) != n_hops:
        raise ValueError(f"allocation has {len(out)} entries, expected {n_hops}")
    if q_sum is not None and sum(out) != q_sum:
        raise ValueError(f"allocation sums to {sum(out)}, expected {q_sum}")
    return out
