"""Per-modality feature extractors and weighted-sum fusion.

The extractors are deterministic stand-ins for learned encoders. Every
extractor emits exactly ``dim_f`` values so that fusion can add the modality
vectors directly::

    X_fused = sum_k w_k * X_k
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

KINDS = ("identity", "affine", "hash-text")

_TOKEN = re.compile(r"\w+")


@dataclass(frozen=True)
class ExtractorSpec:
    """How one modality's raw record becomes a ``dim_f`` vector.

    ``identity`` passes numeric records through, ``affine`` computes
    ``matrix @ raw + offset`` and ``hash-text`` counts word tokens into
    ``buckets`` hashed slots.
    """

    modality_id: int
    kind: str = "identity"
    matrix: np.ndarray | None = None
    offset: np.ndarray | None = None
    buckets: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown extractor kind {self.kind!r}; expected one of {KINDS}")
        if self.modality_id < 0:
            raise ValueError("modality_id must be non-negative")
        if self.kind == "affine":
            if self.matrix is None:
                raise ValueError("affine extractor needs a matrix")
            A = np.atleast_2d(np.asarray(self.matrix, dtype=np.float64))
            b = np.zeros(A.shape[0]) if self.offset is None else np.asarray(self.offset, dtype=np.float64)
            if b.shape != (A.shape[0],):
                raise ValueError(f"offset shape {b.shape} does not match matrix rows {A.shape[0]}")
            object.__setattr__(self, "matrix", A)
            object.__setattr__(self, "offset", b)
        if self.kind == "hash-text" and not (self.buckets and self.buckets > 0):
            raise ValueError("hash-text extractor needs a positive bucket count")

    @property
    def out_dim(self) -> int | None:
        if self.kind == "affine":
            return self.matrix.shape[0]
        if self.kind == "hash-text":
            return self.buckets
        return None

    def to_dict(self) -> dict:
        d: dict = {"modality": self.modality_id, "kind": self.kind}
        if self.kind == "affine":
            d["matrix"] = self.matrix.tolist()
            d["offset"] = self.offset.tolist()
        if self.kind == "hash-text":
            d["buckets"] = self.buckets
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ExtractorSpec":
        allowed = {"modality", "kind", "matrix", "offset", "buckets"}
        unknown = set(d) - allowed
        if unknown:
            raise ValueError(f"unknown extractor keys: {sorted(unknown)}")
        return cls(
            modality_id=int(d["modality"]),
            kind=d.get("kind", "identity"),
            matrix=d.get("matrix"),
            offset=d.get("offset"),
            buckets=d.get("buckets"),
        )


@dataclass(frozen=True)
class ModalityFeature:
    modality_id: int
    vector: np.ndarray = field(repr=False)


def _bucket(token: str, buckets: int) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % buckets


def _hash_text(text: str, buckets: int) -> np.ndarray:
    out = np.zeros(buckets)
    for token in _TOKEN.findall(text.lower()):
        out[_bucket(token, buckets)] += 1.0
    return out


def _numeric(raw, spec: ExtractorSpec) -> np.ndarray:
    if isinstance(raw, str):
        raise ValueError(f"{spec.kind} extractor expects a numeric record, got text")
    x = np.asarray(raw, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"{spec.kind} extractor expects a 1-D record, got shape {x.shape}")
    return x


def extract(spec: ExtractorSpec, raw) -> ModalityFeature:
    """Map one raw record to its modality feature vector."""
    if spec.kind == "hash-text":
        if not isinstance(raw, str):
            raise ValueError("hash-text extractor expects a string record")
        vec = _hash_text(raw, spec.buckets)
    else:
        x = _numeric(raw, spec)
        if spec.kind == "identity":
            vec = x.copy()
        else:
            if x.shape[0] != spec.matrix.shape[1]:
                raise ValueError(f"affine extractor expects length {spec.matrix.shape[1]}, got {x.shape[0]}")
            vec = spec.matrix @ x + spec.offset
    if not np.all(np.isfinite(vec)):
        raise ValueError("extracted feature has non-finite entries")
    return ModalityFeature(spec.modality_id, vec)


def extract_batch(spec: ExtractorSpec, raw) -> np.ndarray:
    """Vectorised :func:`extract` over rows of a numeric matrix or a list of strings."""
    if spec.kind == "hash-text":
        return np.stack([_hash_text(r, spec.buckets) for r in raw])
    X = np.asarray(raw, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D batch of records, got shape {X.shape}")
    if spec.kind == "identity":
        return X.copy()
    if X.shape[1] != spec.matrix.shape[1]:
        raise ValueError(f"affine extractor expects length {spec.matrix.shape[1]}, got {X.shape[1]}")
    return X @ spec.matrix.T + spec.offset


def _weights(w, m: int | None = None) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64).ravel()
    if w.size == 0:
        raise ValueError("fusion weights must not be empty")
    if m is not None and w.size != m:
        raise ValueError(f"expected {m} fusion weights, got {w.size}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("fusion weights must be finite and non-negative")
    return w


def _order(features: Sequence[ModalityFeature]) -> list[ModalityFeature]:
    ids = sorted(f.modality_id for f in features)
    if ids != list(range(len(features))):
        raise ValueError(f"modalities must cover 0..{len(features) - 1} exactly once, got {ids}")
    return sorted(features, key=lambda f: f.modality_id)


def fuse(features: Sequence[ModalityFeature], w) -> np.ndarray:
    """Weighted sum of modality vectors, keyed by ``modality_id``."""
    ordered = _order(features)
    weights = _weights(w, len(ordered))
    dims = {f.vector.shape for f in ordered}
    if len(dims) != 1:
        raise ValueError(f"modality dimension mismatch: {sorted(dims)}")
    out = np.zeros(ordered[0].vector.shape)
    for wk, f in zip(weights, ordered):
        out += wk * f.vector
    return out


def fuse_batch(modalities: Sequence[np.ndarray], w) -> np.ndarray:
    """Fuse ``m`` aligned ``(n, dim_f)`` matrices (index = modality id)."""
    weights = _weights(w, len(modalities))
    shapes = {np.shape(M) for M in modalities}
    if len(shapes) != 1:
        raise ValueError(f"modality dimension mismatch: {sorted(shapes)}")
    out = np.zeros(np.shape(modalities[0]))
    for wk, M in zip(weights, modalities):
        out += wk * np.asarray(M, dtype=np.float64)
    return out


def normalize_weights(w) -> np.ndarray:
    w = _weights(w)
    total = w.sum()
    if total <= 0:
        raise ValueError("cannot normalize all-zero fusion weights")
    return w / total
