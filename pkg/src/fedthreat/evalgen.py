"""Synthetic multimodal threat data, client partitioning, and detection metrics.

Every modality of a sample is drawn from an isotropic Gaussian whose mean
depends on the modality and the binary label (1 = threat). Because the class
conditionals share a covariance, the best achievable accuracy of any linear
detector on a fused feature has a closed form, which the tests use as an
oracle.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.special import expit
from scipy.stats import norm

from .fusion import fuse_batch

GEN_STREAM = 0x6E6
PART_STREAM = 0x9A7
BLOCK = 4096
MAX_PARTITION_RETRIES = 100


@dataclass(frozen=True)
class SyntheticSpec:
    m: int
    dim_f: int
    class_means: np.ndarray  # (m, 2, dim_f): [modality][label]
    noise_std: float = 1.0
    n_samples: int = 10_000
    threat_fraction: float = 0.5
    dirichlet_beta: float = 1e6
    seed: int = 0

    def __post_init__(self):
        if self.m < 1 or self.dim_f < 1:
            raise ValueError("need at least one modality and one feature")
        means = np.asarray(self.class_means, dtype=np.float64)
        if means.shape != (self.m, 2, self.dim_f):
            raise ValueError(f"class_means must have shape {(self.m, 2, self.dim_f)}, got {means.shape}")
        object.__setattr__(self, "class_means", means)
        if not self.noise_std > 0:
            raise ValueError("noise_std must be positive")
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")
        if not 0 < self.threat_fraction < 1:
            raise ValueError("threat_fraction must lie in (0, 1)")
        if not self.dirichlet_beta > 0:
            raise ValueError("dirichlet_beta must be positive")

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "dim_f": self.dim_f,
            "class_means": self.class_means.tolist(),
            "noise_std": self.noise_std,
            "n_samples": self.n_samples,
            "threat_fraction": self.threat_fraction,
            "dirichlet_beta": self.dirichlet_beta,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        return cls(**d)


@dataclass(frozen=True)
class Dataset:
    """Raw per-modality records (``modalities[k]`` is ``(n, dim_f)``) and labels."""

    modalities: tuple[np.ndarray, ...]
    labels: np.ndarray

    def __len__(self) -> int:
        return self.labels.shape[0]

    def subset(self, idx) -> "Dataset":
        return Dataset(tuple(M[idx] for M in self.modalities), self.labels[idx])

    def fused(self, weights) -> np.ndarray:
        return fuse_batch(self.modalities, weights)


def generate(spec: SyntheticSpec) -> Dataset:
    """Draw ``spec.n_samples`` labelled samples.

    Samples are produced in fixed blocks of ``BLOCK`` rows, each from its own
    seeded stream, so the result never depends on how blocks are scheduled and
    a smaller dataset is a prefix of a larger one with the same seed.
    """
    n = spec.n_samples
    labels = np.empty(n, dtype=np.int64)
    mods = [np.empty((n, spec.dim_f)) for _ in range(spec.m)]
    for b, start in enumerate(range(0, n, BLOCK)):
        size = min(BLOCK, n - start)
        rng = np.random.default_rng([spec.seed, GEN_STREAM, b])
        # always draw a full block so a partial one is a prefix of it
        y = (rng.random(BLOCK) < spec.threat_fraction).astype(np.int64)[:size]
        labels[start : start + size] = y
        for k in range(spec.m):
            noise = rng.normal(0.0, spec.noise_std, size=(BLOCK, spec.dim_f))[:size]
            mods[k][start : start + size] = spec.class_means[k][y] + noise
    return Dataset(tuple(mods), labels)


def separation_for_accuracy(accuracy: float, noise_std: float = 1.0) -> float:
    """Mean gap giving balanced-class Bayes ``accuracy``: ``Phi(gap / 2 sigma) = accuracy``."""
    return 2.0 * norm.ppf(accuracy) * noise_std


def make_complementary(spec: SyntheticSpec, unimodal_accuracy: float = 0.75) -> SyntheticSpec:
    """Means where each modality alone is weak but the fused sum is strong.

    All modalities separate the classes along coordinate 0 by the same gap,
    chosen so that one modality on its own reaches ``unimodal_accuracy``
    (balanced classes). Noise is independent across modalities, so the
    equal-weight fused feature has separation ``sqrt(m)`` times larger:
    fused Bayes accuracy is ``Phi(sqrt(m) * Phi^-1(unimodal_accuracy))``
    (0.830 for m=2, 0.934 for m=5, 0.963 for m=7).
    """
    if spec.m < 2:
        raise ValueError("complementary data needs at least two modalities")
    gap = separation_for_accuracy(unimodal_accuracy, spec.noise_std)
    means = np.zeros((spec.m, 2, spec.dim_f))
    means[:, 0, 0] = -gap / 2
    means[:, 1, 0] = gap / 2
    return replace(spec, class_means=means)


def _bayes_from_distance(d: float, threat_fraction: float) -> float:
    p1, p0 = threat_fraction, 1.0 - threat_fraction
    if d == 0:
        return max(p0, p1)
    kappa = math.log(p1 / p0)
    return float(p1 * norm.cdf(d / 2 + kappa / d) + p0 * norm.cdf(d / 2 - kappa / d))


def bayes_accuracy(spec: SyntheticSpec, weights=None) -> float:
    """Best achievable accuracy on the fused feature ``sum_k w_k X_k``.

    The fused classes are Gaussians with a shared isotropic covariance
    ``(noise_std * |w|)^2 I``, so the optimum is a linear rule whose accuracy
    depends only on the Mahalanobis distance between the class means.
    ``weights=None`` means equal weights.
    """
    w = np.full(spec.m, 1.0 / spec.m) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (spec.m,):
        raise ValueError(f"expected {spec.m} weights")
    scale = spec.noise_std * float(np.linalg.norm(w))
    if scale == 0:
        return max(spec.threat_fraction, 1 - spec.threat_fraction)
    gap = np.tensordot(w, spec.class_means[:, 1, :] - spec.class_means[:, 0, :], axes=1)
    return _bayes_from_distance(float(np.linalg.norm(gap)) / scale, spec.threat_fraction)


def modality_bayes_accuracy(spec: SyntheticSpec, k: int) -> float:
    return bayes_accuracy(spec, np.eye(spec.m)[k])


def best_modality(spec: SyntheticSpec) -> int:
    """Modality with the highest unimodal Bayes accuracy (lowest index on ties)."""
    accs = [modality_bayes_accuracy(spec, k) for k in range(spec.m)]
    return int(np.argmax(accs))


def train_test_split(n: int, train_fraction: float = 0.7) -> tuple[np.ndarray, np.ndarray]:
    """Leading ``train_fraction`` of the rows for training, the rest held out.

    Rows are i.i.d. draws, so a prefix split is an unbiased random split.
    """
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie in (0, 1)")
    cut = int(round(n * train_fraction))
    if cut == 0 or cut == n:
        raise ValueError(f"{n} samples cannot be split into non-empty train and test sets")
    return np.arange(cut), np.arange(cut, n)


def partition(labels, num_clients: int, dirichlet_beta: float, seed: int) -> list[np.ndarray]:
    """Split sample indices across clients with Dirichlet label skew.

    For every class the share of each client is drawn from
    ``Dirichlet(beta, ..., beta)``; large ``beta`` approaches an IID split,
    small ``beta`` concentrates each class on few clients. Draws are
    repeated (up to ``MAX_PARTITION_RETRIES``) until every client holds at
    least one sample. Shard indices are returned in ascending order.
    """
    labels = np.asarray(labels)
    n = labels.shape[0]
    if num_clients < 1:
        raise ValueError("need at least one client")
    if n < num_clients:
        raise ValueError(f"cannot give {num_clients} clients a sample each from {n} samples")
    if num_clients == 1:
        return [np.arange(n)]
    classes = np.unique(labels)
    for attempt in range(MAX_PARTITION_RETRIES):
        rng = np.random.default_rng([seed, PART_STREAM, attempt])
        shards: list[list[np.ndarray]] = [[] for _ in range(num_clients)]
        for c in classes:
            idx = rng.permutation(np.flatnonzero(labels == c))
            q = rng.dirichlet(np.full(num_clients, dirichlet_beta))
            cuts = (np.cumsum(q)[:-1] * idx.size).astype(np.int64)
            for i, part in enumerate(np.split(idx, cuts)):
                shards[i].append(part)
        out = [np.sort(np.concatenate(parts)) for parts in shards]
        if all(s.size > 0 for s in out):
            return out
    raise ValueError(f"no partition with non-empty shards after {MAX_PARTITION_RETRIES} draws")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(predictions, labels) -> ConfusionCounts:
    p = np.asarray(predictions).astype(bool).ravel()
    y = np.asarray(labels).astype(bool).ravel()
    if p.shape != y.shape or p.size == 0:
        raise ValueError(f"predictions and labels need equal non-zero length, got {p.size} and {y.size}")
    return ConfusionCounts(
        tp=int(np.sum(p & y)),
        fp=int(np.sum(p & ~y)),
        tn=int(np.sum(~p & ~y)),
        fn=int(np.sum(~p & y)),
    )


@dataclass(frozen=True)
class DetectionMetrics:
    """Accuracy and error rates; a rate is ``None`` when its denominator is zero.

    ``false_negative_rate`` is the missed-detection rate (threats labelled
    benign over all threats).
    """

    accuracy: float
    false_positive_rate: float | None
    false_negative_rate: float | None
    train_seconds: float = 0.0
    detect_seconds: float = 0.0


def metrics(c: ConfusionCounts, train_seconds: float = 0.0, detect_seconds: float = 0.0) -> DetectionMetrics:
    if c.total == 0:
        raise ValueError("no samples evaluated")
    negatives = c.fp + c.tn
    positives = c.fn + c.tp
    return DetectionMetrics(
        accuracy=(c.tp + c.tn) / c.total,
        false_positive_rate=c.fp / negatives if negatives else None,
        false_negative_rate=c.fn / positives if positives else None,
        train_seconds=train_seconds,
        detect_seconds=detect_seconds,
    )


def predict(theta, x, threshold: float = 0.5) -> int:
    """1 (threat) iff ``sigmoid(w.x + b) >= threshold``."""
    return int(predict_batch(theta, np.atleast_2d(x), threshold)[0])


def predict_batch(theta, X, threshold: float = 0.5) -> np.ndarray:
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    theta = np.asarray(theta, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] + 1 != theta.shape[0]:
        raise ValueError(f"features have dim {X.shape[1]}, model expects {theta.shape[0] - 1}")
    return (expit(X @ theta[:-1] + theta[-1]) >= threshold).astype(np.int64)


# -- flat binary export ---------------------------------------------------

_TABLE_HEADER = struct.Struct("<II")


def write_dataset(prefix, data: Dataset, spec: SyntheticSpec | None = None) -> tuple[Path, Path]:
    """Write ``<prefix>.bin`` (table) and ``<prefix>.json`` (readable header).

    The table is ``u32 rows, u32 cols`` followed by row-major little-endian
    float64 values; column 0 is the label, then each modality's features in
    modality order.
    """
    prefix = Path(prefix)
    table = np.column_stack([data.labels.astype(np.float64), *data.modalities])
    bin_path = prefix.with_suffix(".bin")
    with open(bin_path, "wb") as fh:
        fh.write(_TABLE_HEADER.pack(*table.shape))
        fh.write(table.astype("<f8").tobytes())
    header = {
        "rows": int(table.shape[0]),
        "columns": ["label"]
        + [f"m{k}_f{j}" for k, M in enumerate(data.modalities) for j in range(M.shape[1])],
        "modalities": len(data.modalities),
        "dim_f": int(data.modalities[0].shape[1]),
        "encoding": "float64 little-endian, row-major, after u32 rows and u32 cols",
        "spec": spec.to_dict() if spec is not None else None,
    }
    json_path = prefix.with_suffix(".json")
    json_path.write_text(json.dumps(header, indent=2) + "\n")
    return bin_path, json_path


def read_dataset(prefix) -> tuple[Dataset, SyntheticSpec | None]:
    prefix = Path(prefix)
    header = json.loads(prefix.with_suffix(".json").read_text())
    raw = prefix.with_suffix(".bin").read_bytes()
    if len(raw) < _TABLE_HEADER.size:
        raise ValueError("dataset table is truncated")
    rows, cols = _TABLE_HEADER.unpack_from(raw)
    body = raw[_TABLE_HEADER.size :]
    if len(body) != rows * cols * 8:
        raise ValueError(f"table declares {rows}x{cols} values but holds {len(body) // 8}")
    m, dim_f = header["modalities"], header["dim_f"]
    if cols != 1 + m * dim_f or rows != header["rows"]:
        raise ValueError("table shape disagrees with its header")
    table = np.frombuffer(body, dtype="<f8").astype(np.float64).reshape(rows, cols)
    mods = tuple(table[:, 1 + k * dim_f : 1 + (k + 1) * dim_f].copy() for k in range(m))
    spec = SyntheticSpec.from_dict(header["spec"]) if header.get("spec") else None
    return Dataset(mods, table[:, 0].astype(np.int64)), spec

