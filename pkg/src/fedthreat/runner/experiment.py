"""Run federated experiments end to end and write plot-ready CSV files.

A run generates the synthetic dataset, holds out the trailing test split,
partitions the training rows across clients, trains for ``rounds`` rounds
and evaluates the global model on the test split after every round
(round 0 is the untrained model).

Output files in the run directory:

``metrics.csv``
    one row per round; deterministic for a fixed config and seed
``summary.csv``
    the final round plus run-level totals; deterministic
``timings.csv``
    wall-clock training and detection times; varies between runs
``resolved_config.json``
    the config with every default expanded
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import ExitStack
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from ..evalgen import (
    Dataset,
    SyntheticSpec,
    best_modality,
    confusion,
    generate,
    metrics,
    partition,
    predict_batch,
    train_test_split,
)
from ..federation import (
    AsyncFederation,
    AsyncServer,
    ClientState,
    GlobalState,
    LocalTraining,
    SocketCluster,
    default_staleness,
    node_weights,
    run_round_sync,
    sgd_epochs,
)
from ..fusion import extract_batch, fuse_batch
from ..params import LabeledBatch, LrSchedule, global_loss, loss_and_grad
from ..privacy import composed_epsilon, epsilon_report
from .config import ExperimentConfig

log = logging.getLogger(__name__)

METRIC_COLUMNS = [
    "round", "global_loss", "sync_error", "accuracy", "fpr", "fnr",
    "epsilon", "epsilon_total", "train_flops", "updates_applied", "updates_dropped",
]
SUMMARY_COLUMNS = [
    "scenario", "mode", "transport", "num_clients", "rounds", "n_train", "n_test",
    "accuracy", "fpr", "fnr", "global_loss", "sync_error", "epsilon_total", "train_flops_total",
]
TIMING_COLUMNS = ["round", "train_seconds", "train_seconds_cumulative", "detect_seconds"]


@dataclass
class RoundRow:
    round: int
    global_loss: float
    sync_error: float
    accuracy: float
    fpr: float | None
    fnr: float | None
    epsilon: float
    epsilon_total: float
    train_flops: int
    updates_applied: int = 0
    updates_dropped: int = 0
    train_seconds: float = 0.0
    train_seconds_cumulative: float = 0.0
    detect_seconds: float = 0.0


@dataclass
class RunReport:
    config: ExperimentConfig
    rows: list[RoundRow]
    theta: np.ndarray
    n_train: int
    n_test: int
    out_dir: Path | None = None

    @property
    def final(self) -> RoundRow:
        return self.rows[-1]

    @property
    def train_seconds(self) -> float:
        return self.final.train_seconds_cumulative

    @property
    def detect_seconds(self) -> float:
        return self.final.detect_seconds

    def summary(self) -> dict:
        c, f = self.config, self.final
        return {
            "scenario": c.scenario,
            "mode": c.mode,
            "transport": c.transport,
            "num_clients": c.num_clients,
            "rounds": c.rounds,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "accuracy": f.accuracy,
            "fpr": f.fpr,
            "fnr": f.fnr,
            "global_loss": f.global_loss,
            "sync_error": f.sync_error,
            "epsilon_total": f.epsilon_total,
            "train_flops_total": sum(r.train_flops for r in self.rows),
        }


@dataclass
class Prepared:
    """Fused train/test arrays and client shards for one config."""

    spec: SyntheticSpec
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    shards: list[np.ndarray] = field(default_factory=list)


def fused_features(data: Dataset, config: ExperimentConfig, weights=None) -> np.ndarray:
    specs = sorted(config.extractor_specs, key=lambda s: s.modality_id)
    feats = [extract_batch(s, data.modalities[s.modality_id]) for s in specs]
    return fuse_batch(feats, config.weights if weights is None else weights)


def prepare(config: ExperimentConfig, weights=None) -> Prepared:
    spec = config.data.synthetic_spec(config.seed)
    data = generate(spec)
    train_idx, test_idx = train_test_split(len(data), config.data.train_fraction)
    X = fused_features(data, config, weights)
    y = data.labels
    y_train = y[train_idx]
    shards = partition(y_train, config.num_clients, spec.dirichlet_beta, config.seed)
    return Prepared(spec, X[train_idx], y_train, X[test_idx], y[test_idx], shards)


def _fmt(value) -> str:
    if value is None:
        return "nan"
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    return str(value)


def write_csv(path: Path, columns: Sequence[str], rows: Sequence[dict]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in columns])
    path.write_text(buf.getvalue())


class _Evaluator:
    def __init__(self, prep: Prepared, config: ExperimentConfig):
        self.prep = prep
        self.config = config
        self.eps = epsilon_report(config.dp) if config.dp.active else math.inf
        self.flops_per_sample = 4 * (config.fused_dim + 1) * config.local_epochs

    def row(self, theta, rnd: int, sync_err: float, samples: int, applied=0, dropped=0, train_seconds=0.0, cum=0.0):
        p = self.prep
        t0 = time.perf_counter()
        pred = predict_batch(theta, p.X_test, self.config.threshold)
        m = metrics(confusion(pred, p.y_test))
        detect = time.perf_counter() - t0
        losses = [loss_and_grad(theta, p.X_train[s], p.y_train[s])[0] for s in p.shards]
        return RoundRow(
            round=rnd,
            global_loss=global_loss(losses),
            sync_error=sync_err,
            accuracy=m.accuracy,
            fpr=m.false_positive_rate,
            fnr=m.false_negative_rate,
            epsilon=self.eps if rnd > 0 else 0.0,
            epsilon_total=composed_epsilon(self.config.dp, rnd) if rnd > 0 else 0.0,
            train_flops=self.flops_per_sample * samples,
            updates_applied=applied,
            updates_dropped=dropped,
            train_seconds=train_seconds,
            train_seconds_cumulative=cum,
            detect_seconds=detect,
        )


def make_clients(prep: Prepared, config: ExperimentConfig) -> list[ClientState]:
    dim = config.fused_dim + 1
    return [
        ClientState(
            client_id=i,
            shard=LabeledBatch(prep.X_train[idx], prep.y_train[idx]),
            theta=np.zeros(dim),
            schedule=LrSchedule(config.alpha0_for(i), config.lr_decay),
            seed=config.seed,
        )
        for i, idx in enumerate(prep.shards)
    ]


def train_federated(prep: Prepared, config: ExperimentConfig) -> tuple[np.ndarray, list[RoundRow]]:
    clients = make_clients(prep, config)
    training = LocalTraining(config.local_epochs, config.batch_size)
    p = node_weights([len(c.shard) for c in clients], config.node_weights)
    state = GlobalState(np.zeros(config.fused_dim + 1), 0, p)
    ev = _Evaluator(prep, config)
    rows = [ev.row(state.theta, 0, 0.0, 0)]
    cum = 0.0
    if config.mode == "async":
        server = AsyncServer(state, default_staleness(config.base_mix), config.async_.max_staleness, config.async_.rule)
        fed = AsyncFederation(
            server, clients, training, config.dp, config.compression,
            seed=config.seed, max_delay=config.async_.max_delay, shuffle=config.async_.shuffle,
        )
        for _ in range(config.rounds):
            _, stats = fed.run_round()
            cum += stats.train_seconds
            rows.append(ev.row(server.state.theta, stats.round, stats.sync_error, stats.samples_processed,
                               stats.applied, stats.dropped, stats.train_seconds, cum))
        return server.state.theta, rows

    with ExitStack() as stack:
        if config.transport == "socket":
            cluster = stack.enter_context(SocketCluster(clients, training, config.dp, config.compression))

            def step(s):
                return cluster.run_round(s)
        else:
            pool = stack.enter_context(ThreadPoolExecutor(config.workers)) if config.workers > 1 else None

            def step(s):
                return run_round_sync(s, clients, training, config.dp, config.compression, executor=pool)

        for _ in range(config.rounds):
            state, stats = step(state)
            cum += stats.train_seconds
            rows.append(ev.row(state.theta, stats.round, stats.sync_error, stats.samples_processed,
                               stats.applied, 0, stats.train_seconds, cum))
    return state.theta, rows


def train_centralized(X: np.ndarray, y: np.ndarray, config: ExperimentConfig) -> np.ndarray:
    """Plain minibatch SGD on pooled data with the same schedule and batching.

    Mirrors a one-client federation: ``rounds`` blocks of ``local_epochs``
    epochs with a step counter that keeps running across blocks.
    """
    theta = np.zeros(X.shape[1] + 1)
    schedule = LrSchedule(config.alpha0_for(0), config.lr_decay)
    training = LocalTraining(config.local_epochs, config.batch_size)
    step = 0
    for _ in range(config.rounds):
        theta, taken = sgd_epochs(theta, X, y, schedule, step, training)
        step += taken
    return theta


def write_outputs(report: RunReport, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(out_dir / "metrics.csv", METRIC_COLUMNS, [vars(r) for r in report.rows])
    write_csv(out_dir / "summary.csv", SUMMARY_COLUMNS, [report.summary()])
    write_csv(out_dir / "timings.csv", TIMING_COLUMNS, [vars(r) for r in report.rows])
    (out_dir / "resolved_config.json").write_text(report.config.resolved().dumps())
    report.out_dir = out_dir


def run(config: ExperimentConfig, out_dir=None, write: bool = True, weights=None) -> RunReport:
    """Execute one experiment; writes CSVs to ``out_dir`` (default ``config.out_dir``)."""
    config = config.validate()
    prep = prepare(config, weights)
    theta, rows = train_federated(prep, config)
    report = RunReport(config, rows, theta, prep.y_train.size, prep.y_test.size)
    if write:
        write_outputs(report, Path(out_dir if out_dir is not None else config.out_dir))
    log.info("run %s: final accuracy %.4f", config.scenario, report.final.accuracy)
    return report


# -- sweeps ----------------------------------------------------------------

TREND_SIZE_COLUMNS = ["n_samples", "seeds", "accuracy", "fpr", "fnr", "train_seconds"]
TREND_NODE_COLUMNS = ["num_clients", "seeds", "accuracy", "fpr", "fnr", "train_seconds", "n_test"]


def _mean(values):
    vals = [v for v in values if v is not None]
    return math.fsum(vals) / len(vals) if vals else None


def _trend_row(reports: Sequence[RunReport]) -> dict:
    return {
        "seeds": len(reports),
        "accuracy": _mean([r.final.accuracy for r in reports]),
        "fpr": _mean([r.final.fpr for r in reports]),
        "fnr": _mean([r.final.fnr for r in reports]),
        "train_seconds": _mean([r.train_seconds for r in reports]),
    }


def _seeds(config: ExperimentConfig, seeds) -> list[int]:
    seeds = [config.seed] if seeds is None else list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    return seeds


def sweep_dataset_size(config: ExperimentConfig, sizes: Sequence[int], seeds=None, out_dir=None, write=True):
    """Run the base scenario at each dataset size; returns ``(reports, trend_rows)``.

    ``reports[i]`` holds one :class:`RunReport` per seed for ``sizes[i]``.
    """
    sizes = list(sizes)
    if not sizes:
        raise ValueError("no dataset sizes given")
    if len(set(sizes)) != len(sizes):
        raise ValueError(f"duplicate dataset sizes in {sizes}")
    if sizes != sorted(sizes):
        raise ValueError(f"dataset sizes must be ascending, got {sizes}")
    base = Path(out_dir if out_dir is not None else config.out_dir)
    reports, trend = [], []
    for n in sizes:
        per_seed = []
        for s in _seeds(config, seeds):
            cfg = replace(config, seed=s, data=replace(config.data, n_samples=n)).validate()
            per_seed.append(run(cfg, base / f"size_{n}" / f"seed_{s}", write=write))
        reports.append(per_seed)
        trend.append({"n_samples": n, **_trend_row(per_seed)})
    if write:
        base.mkdir(parents=True, exist_ok=True)
        write_csv(base / "trend_size.csv", TREND_SIZE_COLUMNS, trend)
    return reports, trend


def sweep_nodes(config: ExperimentConfig, counts: Sequence[int], seeds=None, out_dir=None, write=True):
    """Re-partition the same dataset across different client counts.

    The dataset and test split depend only on the data config and seed, so
    every row is evaluated on the identical held-out set.
    """
    counts = list(counts)
    if not counts or any(c < 1 for c in counts):
        raise ValueError(f"node counts must be >= 1, got {counts}")
    if len(set(counts)) != len(counts):
        raise ValueError(f"duplicate node counts in {counts}")
    if isinstance(config.lr_alpha0, tuple):
        raise ValueError("node sweeps need a scalar lr.alpha0")
    base = Path(out_dir if out_dir is not None else config.out_dir)
    reports, trend = [], []
    for n in counts:
        per_seed = []
        for s in _seeds(config, seeds):
            cfg = replace(config, seed=s, num_clients=n).validate()
            per_seed.append(run(cfg, base / f"nodes_{n}" / f"seed_{s}", write=write))
        reports.append(per_seed)
        trend.append({"num_clients": n, "n_test": per_seed[0].n_test, **_trend_row(per_seed)})
    if write:
        base.mkdir(parents=True, exist_ok=True)
        write_csv(base / "trend_nodes.csv", TREND_NODE_COLUMNS, trend)
    return reports, trend


# -- model comparison --------------------------------------------------------

COMPARE_COLUMNS = ["model", "seeds", "accuracy", "fpr", "fnr", "train_seconds", "process_seconds"]
COMPARE_MODELS = ("centralized_unimodal", "federated_unimodal", "federated_fused", "centralized_fused")


@dataclass
class ModelResult:
    model: str
    seed: int
    accuracy: float
    fpr: float | None
    fnr: float | None
    train_seconds: float
    process_seconds: float
    theta: np.ndarray = field(repr=False, default=None)


def _evaluate(theta, prep: Prepared, config: ExperimentConfig):
    t0 = time.perf_counter()
    pred = predict_batch(theta, prep.X_test, config.threshold)
    m = metrics(confusion(pred, prep.y_test))
    return m, time.perf_counter() - t0


def run_centralized(config: ExperimentConfig, weights=None) -> ModelResult:
    prep = prepare(config, weights)
    t0 = time.perf_counter()
    theta = train_centralized(prep.X_train, prep.y_train, config)
    train = time.perf_counter() - t0
    m, detect = _evaluate(theta, prep, config)
    return ModelResult("centralized", config.seed, m.accuracy, m.false_positive_rate,
                       m.false_negative_rate, train, detect, theta)


def compare_models(config: ExperimentConfig, seeds=None, out_dir=None, write=True):
    """Side-by-side comparison of the four model variants on a shared test split.

    Unimodal variants put all fusion weight on the modality with the best
    unimodal Bayes accuracy; centralized variants train on the pooled
    training rows without federation or noise.
    Returns ``(mean_rows, per_seed_results)``.
    """
    config = config.validate()
    results: list[ModelResult] = []
    for s in _seeds(config, seeds):
        cfg = replace(config, seed=s)
        spec = cfg.data.synthetic_spec(s)
        one_hot = np.eye(spec.m)[best_modality(spec)]
        for name in COMPARE_MODELS:
            weights = one_hot if name.endswith("unimodal") else None
            if name.startswith("centralized"):
                res = run_centralized(cfg, weights)
            else:
                rep = run(cfg, write=False, weights=weights)
                res = ModelResult("", s, rep.final.accuracy, rep.final.fpr, rep.final.fnr,
                                  rep.train_seconds, rep.detect_seconds, rep.theta)
            res.model, res.seed = name, s
            results.append(res)
    rows = []
    for name in COMPARE_MODELS:
        rs = [r for r in results if r.model == name]
        rows.append({
            "model": name,
            "seeds": len(rs),
            "accuracy": _mean([r.accuracy for r in rs]),
            "fpr": _mean([r.fpr for r in rs]),
            "fnr": _mean([r.fnr for r in rs]),
            "train_seconds": _mean([r.train_seconds for r in rs]),
            "process_seconds": _mean([r.process_seconds for r in rs]),
        })
    if write:
        base = Path(out_dir if out_dir is not None else config.out_dir)
        base.mkdir(parents=True, exist_ok=True)
        write_csv(base / "compare.csv", COMPARE_COLUMNS, rows)
        write_csv(base / "compare_by_seed.csv", ["seed"] + COMPARE_COLUMNS[:1] + COMPARE_COLUMNS[2:],
                  [{"seed": r.seed, **{k: getattr(r, k) for k in COMPARE_COLUMNS if k != "seeds"}} for r in results])
        (base / "resolved_config.json").write_text(config.resolved().dumps())
    return rows, results
