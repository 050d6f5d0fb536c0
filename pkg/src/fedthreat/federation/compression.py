"""Top-k magnitude sparsification of client updates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MODES = ("none", "topk")


@dataclass(frozen=True)
class CompressionSpec:
    mode: str = "none"
    k: int | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown compression mode {self.mode!r}")
        if self.mode == "topk" and (self.k is None or self.k <= 0):
            raise ValueError("topk compression needs k >= 1")

    def to_dict(self) -> dict:
        return {"mode": self.mode, "k": self.k}


@dataclass(frozen=True)
class SparseUpdate:
    """Coordinates kept by compression; everything else is zero."""

    dim: int
    indices: np.ndarray
    values: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, SparseUpdate):
            return NotImplemented
        return (
            self.dim == other.dim
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )


def compress(update, spec: CompressionSpec) -> SparseUpdate:
    """Keep the ``k`` largest-magnitude coordinates (lower index wins ties).

    With ``mode == "none"`` every coordinate is kept.
    """
    v = np.asarray(update, dtype=np.float64)
    dim = v.shape[0]
    if spec.mode == "none":
        return SparseUpdate(dim, np.arange(dim, dtype=np.uint32), v.copy())
    if spec.k > dim:
        raise ValueError(f"k={spec.k} exceeds update dimension {dim}")
    # stable sort keeps the lower index first among equal magnitudes
    order = np.argsort(-np.abs(v), kind="stable")[: spec.k]
    idx = np.sort(order)
    return SparseUpdate(dim, idx.astype(np.uint32), v[idx].copy())


def decompress(sparse: SparseUpdate) -> np.ndarray:
    out = np.zeros(sparse.dim)
    out[sparse.indices.astype(np.intp)] = sparse.values
    return out
