"""Server-side aggregation and the synchronization metric."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..params import check_same_dim

WEIGHT_TOL = 1e-9


def node_weights(n_samples: Sequence[int], mode: str = "uniform") -> np.ndarray:
    """Client weights for aggregation.

    ``uniform`` gives ``1/N`` to every node; ``proportional`` gives
    ``n_i / sum(n)``.
    """
    n = np.asarray(n_samples, dtype=np.float64)
    if n.size == 0:
        raise ValueError("need at least one client")
    if mode == "uniform":
        return np.full(n.size, 1.0 / n.size)
    if mode == "proportional":
        if np.any(n < 0) or n.sum() <= 0:
            raise ValueError("sample counts must be non-negative with a positive total")
        return n / n.sum()
    raise ValueError(f"unknown node-weight mode {mode!r}")


def aggregate(updates: Sequence[np.ndarray], p) -> np.ndarray:
    """Weighted average ``sum_i p_i * theta_i``.

    Summation runs in list order; callers pass updates sorted by client id so
    the floating-point result does not depend on arrival order.
    """
    if len(updates) == 0:
        raise ValueError("nothing to aggregate")
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (len(updates),):
        raise ValueError(f"got {len(updates)} updates but {p.size} weights")
    if np.any(p < 0) or abs(p.sum() - 1.0) > WEIGHT_TOL:
        raise ValueError(f"node weights must be non-negative and sum to 1, got sum {p.sum()!r}")
    vecs = [np.asarray(u, dtype=np.float64) for u in updates]
    check_same_dim(*vecs)
    if len(vecs) == 1:
        return vecs[0].copy()
    out = np.zeros_like(vecs[0])
    for pi, v in zip(p, vecs):
        out += pi * v
    return out


def sync_error(clients: Sequence[np.ndarray], theta_global) -> float:
    """Sum of squared L2 distances between client models and the global model."""
    g = np.asarray(theta_global, dtype=np.float64)
    total = 0.0
    for c in clients:
        c = np.asarray(c, dtype=np.float64)
        check_same_dim(c, g)
        d = c - g
        total += float(d @ d)
    return total
