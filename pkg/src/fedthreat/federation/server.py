"""Server state and round orchestration (synchronous and asynchronous)."""

from __future__ import annotations

import time
from concurrent.futures import Executor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from ..privacy import DpConfig
from .aggregation import WEIGHT_TOL, aggregate, sync_error
from .client import ClientState, LocalTraining
from .compression import CompressionSpec
from .protocol import ClientUpdate, GlobalBroadcast, ProtocolError, SparseClientUpdate

ASYNC_DELAY_STREAM = 0xA51
ASYNC_ORDER_STREAM = 0xA52


@dataclass(frozen=True)
class GlobalState:
    theta: np.ndarray
    round: int
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("node weights must be a non-empty 1-D sequence")
        if np.any(w < 0) or abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError("node weights must be non-negative and sum to 1")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=np.float64))

    @property
    def num_nodes(self) -> int:
        return self.weights.size

    def broadcast(self) -> GlobalBroadcast:
        return GlobalBroadcast(self.round, self.theta.copy())


@dataclass
class RoundStats:
    round: int
    client_models: list[np.ndarray]
    sync_error: float
    train_seconds: float
    samples_processed: int
    applied: int = 0
    dropped: int = 0


def _check_update(state: GlobalState, msg, expected_round: int | None = None) -> np.ndarray:
    if not isinstance(msg, (ClientUpdate, SparseClientUpdate)):
        raise ProtocolError(f"expected a client update, got {type(msg).__name__}")
    if not 0 <= msg.client_id < state.num_nodes:
        raise ProtocolError(f"unknown client id {msg.client_id}")
    if msg.round > state.round:
        raise ProtocolError(f"client {msg.client_id} reports future round {msg.round} (server at {state.round})")
    if expected_round is not None and msg.round != expected_round:
        raise ProtocolError(f"client {msg.client_id} reports stale round {msg.round}, expected {expected_round}")
    delta = msg.dense()
    if delta.shape != state.theta.shape:
        raise ProtocolError(
            f"client {msg.client_id} sent dim {delta.shape[0]}, model dim is {state.theta.shape[0]}"
        )
    return delta


def apply_sync(state: GlobalState, messages: Sequence, train_seconds: float = 0.0) -> tuple[GlobalState, RoundStats]:
    """Aggregate one complete round of client updates.

    Every client must report exactly once for the current round. Deltas are
    combined in ascending client-id order regardless of arrival order.
    """
    by_id = {}
    for msg in messages:
        delta = _check_update(state, msg, expected_round=state.round)
        if msg.client_id in by_id:
            raise ProtocolError(f"duplicate update from client {msg.client_id}")
        by_id[msg.client_id] = (delta, msg.n_samples)
    missing = sorted(set(range(state.num_nodes)) - set(by_id))
    if missing:
        raise ProtocolError(f"round {state.round} barrier: no update from clients {missing}")
    deltas = [by_id[i][0] for i in range(state.num_nodes)]
    theta = state.theta + aggregate(deltas, state.weights)
    models = [state.theta + d for d in deltas]
    stats = RoundStats(
        round=state.round + 1,
        client_models=models,
        sync_error=sync_error(models, theta),
        train_seconds=train_seconds,
        samples_processed=sum(by_id[i][1] for i in range(state.num_nodes)),
        applied=state.num_nodes,
    )
    return replace(state, theta=theta, round=state.round + 1), stats


def run_round_sync(
    state: GlobalState,
    clients: Sequence[ClientState],
    training: LocalTraining,
    dp: DpConfig,
    comp: CompressionSpec,
    executor: Executor | None = None,
) -> tuple[GlobalState, RoundStats]:
    """Broadcast, let every client train, then aggregate behind a barrier.

    With an ``executor`` the clients run concurrently; each one only touches
    its own state and receives the broadcast by value.
    """
    if len(clients) != state.num_nodes:
        raise ProtocolError(f"{len(clients)} clients registered, server expects {state.num_nodes}")

    def work(client: ClientState):
        return client.handle(state.broadcast(), training, dp, comp)

    t0 = time.perf_counter()
    if executor is None:
        messages = [work(c) for c in clients]
    else:
        messages = list(executor.map(work, clients))
    elapsed = time.perf_counter() - t0
    return apply_sync(state, messages, elapsed)


def default_staleness(base_mix: float) -> Callable[[int], float]:
    def mix(s: int) -> float:
        return base_mix / (1.0 + s)

    return mix


class AsyncServer:
    """Applies client updates one at a time as they arrive.

    For an update trained from round ``r`` and applied at server round
    ``R``, staleness is ``s = R - r`` and the mixing weight is
    ``staleness_fn(s)``. Two mixing rules are supported:

    ``delta``
        ``theta <- theta + beta * update``. With ``beta = 1/N`` and all
        updates fresh this reproduces one synchronous uniform round exactly.
    ``model``
        ``theta <- (1 - beta) * theta + beta * (theta_at_r + update)``,
        i.e. interpolation towards the client's local model.

    Updates staler than ``max_staleness`` are dropped and counted.
    """

    def __init__(
        self,
        state: GlobalState,
        staleness_fn: Callable[[int], float],
        max_staleness: int = 4,
        rule: str = "delta",
    ):
        if rule not in ("delta", "model"):
            raise ValueError(f"unknown async mixing rule {rule!r}")
        self.state = state
        self.staleness_fn = staleness_fn
        self.max_staleness = max_staleness
        self.rule = rule
        self.history = {state.round: state.theta.copy()}
        self.applied = 0
        self.dropped = 0

    def receive(self, msg) -> bool:
        delta = _check_update(self.state, msg)
        s = self.state.round - msg.round
        if s > self.max_staleness:
            self.dropped += 1
            return False
        beta = self.staleness_fn(s)
        theta = self.state.theta
        if self.rule == "delta":
            new = theta + beta * delta
        else:
            base = self.history[msg.round]
            new = (1.0 - beta) * theta + beta * (base + delta)
        self.state = replace(self.state, theta=new)
        self.applied += 1
        return True

    def end_round(self) -> GlobalState:
        self.state = replace(self.state, round=self.state.round + 1)
        self.history[self.state.round] = self.state.theta.copy()
        for r in [r for r in self.history if r < self.state.round - self.max_staleness]:
            del self.history[r]
        return self.state


@dataclass
class _InFlight:
    arrive: int
    base: np.ndarray
    msg: object


@dataclass
class AsyncFederation:
    """Deterministic event loop for asynchronous training.

    Each round, every idle client fetches the current global model, trains,
    and its update arrives after a random delay of ``0..max_delay`` rounds.
    Updates due in a round are applied in a random order (or ascending
    client id when ``shuffle`` is false). Delays and orders are drawn from
    streams seeded by ``(seed, round)`` so runs are reproducible.
    """

    server: AsyncServer
    clients: Sequence[ClientState]
    training: LocalTraining
    dp: DpConfig
    comp: CompressionSpec
    seed: int = 0
    max_delay: int = 0
    shuffle: bool = True
    in_flight: dict = field(default_factory=dict)

    def run_round(self) -> tuple[list[GlobalState], RoundStats]:
        """Advance one round; returns the global state after each applied update."""
        rnd = self.server.state.round
        delay_rng = np.random.default_rng([self.seed, ASYNC_DELAY_STREAM, rnd])
        t0 = time.perf_counter()
        processed = 0
        for client in self.clients:
            if client.client_id in self.in_flight:
                continue
            bcast = self.server.state.broadcast()
            msg = client.handle(bcast, self.training, self.dp, self.comp)
            delay = int(delay_rng.integers(0, self.max_delay + 1)) if self.max_delay else 0
            self.in_flight[client.client_id] = _InFlight(rnd + delay, bcast.theta, msg)
            processed += len(client.shard)
        elapsed = time.perf_counter() - t0

        due = sorted(cid for cid, f in self.in_flight.items() if f.arrive <= rnd)
        if self.shuffle and len(due) > 1:
            order_rng = np.random.default_rng([self.seed, ASYNC_ORDER_STREAM, rnd])
            due = [due[i] for i in order_rng.permutation(len(due))]
        snapshots = []
        models = []
        applied = dropped = 0
        for cid in due:
            flight = self.in_flight.pop(cid)
            if self.server.receive(flight.msg):
                applied += 1
                snapshots.append(self.server.state)
                models.append(flight.base + flight.msg.dense())
            else:
                dropped += 1
        state = self.server.end_round()
        stats = RoundStats(
            round=state.round,
            client_models=models,
            sync_error=sync_error(models, state.theta) if models else 0.0,
            train_seconds=elapsed,
            samples_processed=processed,
            applied=applied,
            dropped=dropped,
        )
        return snapshots, stats
