"""Flat parameter vectors, the logistic detector loss, and local SGD.

Parameters are plain 1-D ``float64`` numpy arrays. For a fused feature
dimension ``dim_f`` the vector holds ``dim_f`` weights followed by one bias.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit


def as_params(values, dim: int | None = None) -> np.ndarray:
    """Return ``values`` as a finite 1-D float64 parameter vector.

    Raises ``ValueError`` on non-finite entries, a wrong rank, or (when
    ``dim`` is given) a length mismatch.
    """
    theta = np.asarray(values, dtype=np.float64)
    if theta.ndim != 1 or theta.size == 0:
        raise ValueError(f"parameter vector must be 1-D and non-empty, got shape {theta.shape}")
    if dim is not None and theta.size != dim:
        raise ValueError(f"expected dim {dim}, got {theta.size}")
    if not np.all(np.isfinite(theta)):
        raise ValueError("parameter vector contains NaN or Inf")
    return theta


def check_same_dim(*vectors: np.ndarray) -> int:
    dims = {np.shape(v)[0] for v in vectors}
    if len(dims) != 1:
        raise ValueError(f"dimension mismatch: {sorted(dims)}")
    return dims.pop()


@dataclass(frozen=True)
class LrSchedule:
    """Inverse-decay step size ``alpha0 / (1 + decay * t)``."""

    alpha0: float
    decay: float = 0.0

    def __post_init__(self):
        if not self.alpha0 > 0:
            raise ValueError("alpha0 must be positive")
        if not self.decay >= 0:
            raise ValueError("decay must be non-negative")


def lr_at(schedule: LrSchedule, t: int) -> float:
    if t < 0:
        raise ValueError("step index must be non-negative")
    return schedule.alpha0 / (1.0 + schedule.decay * t)


@dataclass(frozen=True)
class LabeledBatch:
    """Fused feature rows with binary labels (1 = threat)."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        y = np.asarray(self.labels).astype(np.int64).ravel()
        if X.shape[0] == 0 or X.shape[0] != y.shape[0]:
            raise ValueError(
                f"need equal, non-zero numbers of rows and labels, got {X.shape[0]} and {y.shape[0]}"
            )
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("labels must be 0 or 1")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def dim_f(self) -> int:
        return self.features.shape[1]


def scores(theta: np.ndarray, X: np.ndarray) -> np.ndarray:
    return X @ theta[:-1] + theta[-1]


def _check_model(theta, batch: LabeledBatch) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 1 or theta.size != batch.dim_f + 1:
        raise ValueError(f"theta has dim {theta.size}, batch needs {batch.dim_f + 1}")
    return theta


def loss_and_grad(theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean logistic loss and its gradient on raw arrays, no validation.

    Used by the training loops where batches are array slices.
    """
    signs = 2.0 * y - 1.0
    margins = signs * scores(theta, X)
    loss = float(np.mean(np.logaddexp(0.0, -margins)))
    coef = -signs * expit(-margins) / y.shape[0]
    grad = np.empty_like(theta)
    grad[:-1] = coef @ X
    grad[-1] = coef.sum()
    return loss, grad


def local_loss(theta, batch: LabeledBatch) -> float:
    """Mean binary logistic loss ``log(1 + exp(-y' s))`` with ``y' = 2y - 1``."""
    theta = _check_model(theta, batch)
    margins = (2.0 * batch.labels - 1.0) * scores(theta, batch.features)
    return float(np.mean(np.logaddexp(0.0, -margins)))


def local_gradient(theta, batch: LabeledBatch) -> np.ndarray:
    theta = _check_model(theta, batch)
    return loss_and_grad(theta, batch.features, batch.labels)[1]


def sgd_step(theta, grad, rate: float) -> np.ndarray:
    """One gradient step ``theta - rate * grad``; returns a new array."""
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    check_same_dim(theta, grad)
    if not rate >= 0:
        raise ValueError("rate must be non-negative")
    return theta - rate * grad


def global_loss(local_losses: Sequence[float]) -> float:
    losses = [float(v) for v in local_losses]
    if not losses:
        raise ValueError("global_loss needs at least one client loss")
    return math.fsum(losses) / len(losses)
