"""A federated node: local SGD on its shard and update preparation."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..params import LabeledBatch, LrSchedule, loss_and_grad, lr_at
from ..privacy import DpConfig, privatize
from .compression import CompressionSpec, compress
from .protocol import ClientUpdate, GlobalBroadcast, SparseClientUpdate


@dataclass(frozen=True)
class LocalTraining:
    """Local work per round: ``epochs`` passes over the shard in minibatches.

    ``batch_size=None`` means full-batch gradient descent.
    """

    epochs: int = 1
    batch_size: int | None = 64

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size is not None and self.batch_size <= 0:
            raise ValueError("batch_size must be positive")

    def batches_per_epoch(self, n: int) -> int:
        if self.batch_size is None:
            return 1
        return -(-n // self.batch_size)


def sgd_epochs(theta, X: np.ndarray, y: np.ndarray, schedule: LrSchedule, step0: int, training: LocalTraining):
    """Run minibatch SGD in fixed data order; returns ``(theta, steps_taken)``.

    Batches are contiguous slices in shard order. The step size is
    ``lr_at(schedule, step0 + k)`` for the k-th step taken here.
    """
    theta = np.array(theta, dtype=np.float64)
    n = y.shape[0]
    size = n if training.batch_size is None else training.batch_size
    step = step0
    for _ in range(training.epochs):
        for start in range(0, n, size):
            _, grad = loss_and_grad(theta, X[start : start + size], y[start : start + size])
            theta -= lr_at(schedule, step) * grad
            step += 1
    return theta, step - step0


@dataclass
class ClientState:
    client_id: int
    shard: LabeledBatch
    theta: np.ndarray
    schedule: LrSchedule
    local_step: int = 0
    seed: int = 0
    rounds_done: int = field(default=0, compare=False)

    def train_from(self, theta_start, training: LocalTraining) -> np.ndarray:
        """Reset to ``theta_start``, train locally, and return the update delta."""
        start = np.array(theta_start, dtype=np.float64)
        self.theta, steps = sgd_epochs(
            start, self.shard.features, self.shard.labels, self.schedule, self.local_step, training
        )
        self.local_step += steps
        self.rounds_done += 1
        return self.theta - start

    def handle(
        self,
        msg: GlobalBroadcast,
        training: LocalTraining,
        dp: DpConfig,
        comp: CompressionSpec,
    ) -> ClientUpdate | SparseClientUpdate:
        """Answer a broadcast with a (privatized, possibly compressed) update."""
        t0 = time.perf_counter()
        delta = self.train_from(msg.theta, training)
        delta = privatize(delta, dp, self.seed, self.client_id, msg.round)
        elapsed = time.perf_counter() - t0
        n = len(self.shard)
        if comp.mode == "none":
            return ClientUpdate(self.client_id, msg.round, delta, n, elapsed)
        return SparseClientUpdate(self.client_id, msg.round, compress(delta, comp), n, elapsed)
