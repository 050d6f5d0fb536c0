"""Experiment configuration: a single JSON document with strict keys.

Every field has a default; :meth:`ExperimentConfig.resolved` expands the
derived ones (model dimension, fusion weights, extractors, async mixing) so
the written ``resolved_config.json`` reproduces a run on its own.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from ..evalgen import SyntheticSpec, make_complementary
from ..federation.compression import CompressionSpec
from ..fusion import ExtractorSpec
from ..privacy import DpConfig


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending line or field."""


def _section(raw: Any, path: str, allowed: set[str]) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected an object, got {type(raw).__name__}")
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {', '.join(unknown)}")
    return raw


def _typed(raw: dict, key: str, path: str, kinds, default):
    if key not in raw:
        return default
    value = raw[key]
    ok = isinstance(value, kinds) and not (isinstance(value, bool) and bool not in _as_tuple(kinds))
    if not ok:
        names = "/".join(k.__name__ for k in _as_tuple(kinds))
        raise ConfigError(f"{path}.{key}: expected {names}, got {json.dumps(value)}")
    return value


def _as_tuple(kinds) -> tuple:
    return kinds if isinstance(kinds, tuple) else (kinds,)


_NUM = (int, float)
_NULL = type(None)


@dataclass(frozen=True)
class DataConfig:
    m: int = 7
    dim_f: int = 16
    class_means: Any = "complementary"  # "complementary" or an (m, 2, dim_f) nested list
    unimodal_accuracy: float = 0.75
    noise_std: float = 1.0
    n_samples: int = 10_000
    threat_fraction: float = 0.5
    dirichlet_beta: float = 1e6
    train_fraction: float = 0.7

    def synthetic_spec(self, seed: int) -> SyntheticSpec:
        if isinstance(self.class_means, str):
            placeholder = np.zeros((self.m, 2, self.dim_f))
            base = SyntheticSpec(
                self.m, self.dim_f, placeholder, self.noise_std, self.n_samples,
                self.threat_fraction, self.dirichlet_beta, seed,
            )
            return make_complementary(base, self.unimodal_accuracy)
        return SyntheticSpec(
            self.m, self.dim_f, np.asarray(self.class_means, dtype=np.float64), self.noise_std,
            self.n_samples, self.threat_fraction, self.dirichlet_beta, seed,
        )


@dataclass(frozen=True)
class AsyncConfig:
    base_mix: float | None = None  # None -> 1/N
    max_staleness: int = 4
    max_delay: int = 2
    rule: str = "delta"
    shuffle: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "complementary"
    num_clients: int = 10
    rounds: int = 50
    local_epochs: int = 1
    batch_size: int | None = 64
    model_dim: int | None = None
    fusion_weights: tuple | None = None
    extractors: tuple | None = None
    lr_alpha0: float | tuple = 0.5
    lr_decay: float = 0.01
    dp: DpConfig = field(default_factory=DpConfig)
    compression: CompressionSpec = field(default_factory=CompressionSpec)
    mode: str = "sync"
    transport: str = "sim"
    workers: int = 1
    async_: AsyncConfig = field(default_factory=AsyncConfig)
    data: DataConfig = field(default_factory=DataConfig)
    node_weights: str = "uniform"
    threshold: float = 0.5
    seed: int = 0
    out_dir: str = "runs/default"

    # -- derived ---------------------------------------------------------

    @property
    def extractor_specs(self) -> list[ExtractorSpec]:
        if self.extractors is None:
            return [ExtractorSpec(k) for k in range(self.data.m)]
        return [ExtractorSpec.from_dict(d) for d in self.extractors]

    @property
    def fused_dim(self) -> int:
        dims = {s.out_dim or self.data.dim_f for s in self.extractor_specs}
        return dims.pop()

    @property
    def weights(self) -> np.ndarray:
        if self.fusion_weights is None:
            return np.full(self.data.m, 1.0 / self.data.m)
        return np.asarray(self.fusion_weights, dtype=np.float64)

    def alpha0_for(self, client_id: int) -> float:
        if isinstance(self.lr_alpha0, tuple):
            return float(self.lr_alpha0[client_id])
        return float(self.lr_alpha0)

    @property
    def base_mix(self) -> float:
        if self.async_.base_mix is None:
            return 1.0 / self.num_clients
        return self.async_.base_mix

    def resolved(self) -> "ExperimentConfig":
        return replace(
            self,
            model_dim=self.fused_dim + 1,
            fusion_weights=tuple(float(w) for w in self.weights),
            extractors=tuple(s.to_dict() for s in self.extractor_specs),
            async_=replace(self.async_, base_mix=self.base_mix),
        )

    # -- validation ------------------------------------------------------

    def validate(self) -> "ExperimentConfig":
        def need(cond, where, msg):
            if not cond:
                raise ConfigError(f"{where}: {msg}")

        d = self.data
        need(self.num_clients >= 1, "num_clients", "must be >= 1")
        need(self.rounds >= 0, "rounds", "must be >= 0")
        need(self.local_epochs >= 0, "local_epochs", "must be >= 0")
        need(self.batch_size is None or self.batch_size >= 1, "batch_size", "must be >= 1 or null")
        need(self.mode in ("sync", "async"), "mode", "must be 'sync' or 'async'")
        need(self.transport in ("sim", "socket"), "transport", "must be 'sim' or 'socket'")
        need(not (self.transport == "socket" and self.mode == "async"), "transport",
             "socket transport supports sync mode only")
        need(self.workers >= 1, "workers", "must be >= 1")
        need(self.node_weights in ("uniform", "proportional"), "node_weights",
             "must be 'uniform' or 'proportional'")
        need(0 < self.threshold < 1, "threshold", "must lie in (0, 1)")
        need(self.seed >= 0, "seed", "must be >= 0")
        need(self.lr_decay >= 0, "lr.decay", "must be >= 0")
        alphas = self.lr_alpha0 if isinstance(self.lr_alpha0, tuple) else (self.lr_alpha0,)
        need(all(a > 0 for a in alphas), "lr.alpha0", "must be > 0")
        if isinstance(self.lr_alpha0, tuple):
            need(len(self.lr_alpha0) == self.num_clients, "lr.alpha0",
                 f"per-client list needs {self.num_clients} entries")
        need(d.m >= 1 and d.dim_f >= 1, "data", "m and dim_f must be >= 1")
        need(d.noise_std > 0, "data.noise_std", "must be > 0")
        need(d.n_samples >= 2, "data.n_samples", "must be >= 2")
        need(0 < d.threat_fraction < 1, "data.threat_fraction", "must lie in (0, 1)")
        need(d.dirichlet_beta > 0, "data.dirichlet_beta", "must be > 0")
        need(0 < d.train_fraction < 1, "data.train_fraction", "must lie in (0, 1)")
        need(0.5 < d.unimodal_accuracy < 1, "data.unimodal_accuracy", "must lie in (0.5, 1)")
        if isinstance(d.class_means, str):
            need(d.class_means == "complementary", "data.class_means",
                 "must be 'complementary' or a nested list")
            need(d.m >= 2, "data.m", "complementary data needs m >= 2")
        else:
            shape = np.shape(d.class_means)
            need(shape == (d.m, 2, d.dim_f), "data.class_means", f"expected shape {(d.m, 2, d.dim_f)}, got {shape}")
        need(d.n_samples * d.train_fraction >= self.num_clients, "data.n_samples",
             f"training split too small for {self.num_clients} clients")
        w = self.weights
        need(w.shape == (d.m,), "fusion_weights", f"expected {d.m} weights")
        need(bool(np.all(w >= 0)) and w.sum() > 0, "fusion_weights", "must be non-negative, not all zero")
        try:
            specs = self.extractor_specs
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"extractors: {exc}") from exc
        need(sorted(s.modality_id for s in specs) == list(range(d.m)), "extractors",
             f"must cover modalities 0..{d.m - 1} exactly once")
        for s in specs:
            where = f"extractors[{s.modality_id}]"
            need(s.kind != "hash-text", where, "synthetic records are numeric; hash-text needs text input")
            if s.kind == "affine":
                need(s.matrix.shape[1] == d.dim_f, where, f"matrix needs {d.dim_f} columns")
        need(len({s.out_dim or d.dim_f for s in specs}) == 1, "extractors", "all extractors must emit the same dimension")
        if self.model_dim is not None:
            need(self.model_dim == self.fused_dim + 1, "model_dim",
                 f"must equal fused dimension + 1 = {self.fused_dim + 1}")
        if self.compression.mode == "topk":
            need(self.compression.k <= self.fused_dim + 1, "compression.k", "must not exceed the model dimension")
        a = self.async_
        need(a.max_staleness >= 0 and a.max_delay >= 0, "async", "max_staleness and max_delay must be >= 0")
        need(a.rule in ("delta", "model"), "async.rule", "must be 'delta' or 'model'")
        need(a.base_mix is None or 0 < a.base_mix <= 1, "async.base_mix", "must lie in (0, 1]")
        return self

    # -- (de)serialisation ----------------------------------------------

    def to_dict(self) -> dict:
        alpha = list(self.lr_alpha0) if isinstance(self.lr_alpha0, tuple) else self.lr_alpha0
        return {
            "scenario": self.scenario,
            "num_clients": self.num_clients,
            "rounds": self.rounds,
            "local_epochs": self.local_epochs,
            "batch_size": self.batch_size,
            "model_dim": self.model_dim,
            "fusion_weights": None if self.fusion_weights is None else list(self.fusion_weights),
            "extractors": None if self.extractors is None else list(self.extractors),
            "lr": {"alpha0": alpha, "decay": self.lr_decay},
            "dp": self.dp.to_dict(),
            "compression": self.compression.to_dict(),
            "mode": self.mode,
            "transport": self.transport,
            "workers": self.workers,
            "async": {
                "base_mix": self.async_.base_mix,
                "max_staleness": self.async_.max_staleness,
                "max_delay": self.async_.max_delay,
                "rule": self.async_.rule,
                "shuffle": self.async_.shuffle,
            },
            "data": {
                "m": self.data.m,
                "dim_f": self.data.dim_f,
                "class_means": self.data.class_means,
                "unimodal_accuracy": self.data.unimodal_accuracy,
                "noise_std": self.data.noise_std,
                "n_samples": self.data.n_samples,
                "threat_fraction": self.data.threat_fraction,
                "dirichlet_beta": self.data.dirichlet_beta,
                "train_fraction": self.data.train_fraction,
            },
            "node_weights": self.node_weights,
            "threshold": self.threshold,
            "seed": self.seed,
            "out_dir": self.out_dir,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        top = _section(raw, "config", {
            "scenario", "num_clients", "rounds", "local_epochs", "batch_size", "model_dim",
            "fusion_weights", "extractors", "lr", "dp", "compression", "mode", "transport",
            "workers", "async", "data", "node_weights", "threshold", "seed", "out_dir",
        })
        base = cls()
        p = "config"
        lr = _section(top.get("lr", {}), "lr", {"alpha0", "decay"})
        alpha = _typed(lr, "alpha0", "lr", (int, float, list), base.lr_alpha0)
        if isinstance(alpha, list):
            if not all(isinstance(a, _NUM) and not isinstance(a, bool) for a in alpha):
                raise ConfigError("lr.alpha0: list entries must be numbers")
            alpha = tuple(float(a) for a in alpha)
        else:
            alpha = float(alpha)

        dpr = _section(top.get("dp", {}), "dp", {"sigma", "clip_norm", "delta", "enabled"})
        compr = _section(top.get("compression", {}), "compression", {"mode", "k"})
        asr = _section(top.get("async", {}), "async", {"base_mix", "max_staleness", "max_delay", "rule", "shuffle"})
        dr = _section(top.get("data", {}), "data", {
            "m", "dim_f", "class_means", "unimodal_accuracy", "noise_std", "n_samples",
            "threat_fraction", "dirichlet_beta", "train_fraction",
        })
        fw = _typed(top, "fusion_weights", p, (list, _NULL), None)
        if fw is not None and not all(isinstance(x, _NUM) and not isinstance(x, bool) for x in fw):
            raise ConfigError("config.fusion_weights: entries must be numbers")
        ex = _typed(top, "extractors", p, (list, _NULL), None)
        if ex is not None:
            for i, e in enumerate(ex):
                _section(e, f"extractors[{i}]", {"modality", "kind", "matrix", "offset", "buckets"})
                if "modality" not in e:
                    raise ConfigError(f"extractors[{i}]: missing key modality")
        d0 = DataConfig()
        a0 = AsyncConfig()
        try:
            dp = DpConfig(
                sigma=float(_typed(dpr, "sigma", "dp", _NUM, 0.0)),
                clip_norm=float(_typed(dpr, "clip_norm", "dp", _NUM, 1.0)),
                delta=float(_typed(dpr, "delta", "dp", _NUM, 1e-5)),
                enabled=_typed(dpr, "enabled", "dp", bool, False),
            )
        except ValueError as exc:
            raise ConfigError(f"dp: {exc}") from exc
        try:
            comp = CompressionSpec(
                mode=_typed(compr, "mode", "compression", str, "none"),
                k=_typed(compr, "k", "compression", (int, _NULL), None),
            )
        except ValueError as exc:
            raise ConfigError(f"compression: {exc}") from exc
        cm = _typed(dr, "class_means", "data", (str, list), d0.class_means)
        return cls(
            scenario=_typed(top, "scenario", p, str, base.scenario),
            num_clients=_typed(top, "num_clients", p, int, base.num_clients),
            rounds=_typed(top, "rounds", p, int, base.rounds),
            local_epochs=_typed(top, "local_epochs", p, int, base.local_epochs),
            batch_size=_typed(top, "batch_size", p, (int, _NULL), base.batch_size),
            model_dim=_typed(top, "model_dim", p, (int, _NULL), None),
            fusion_weights=None if fw is None else tuple(float(x) for x in fw),
            extractors=None if ex is None else tuple(ex),
            lr_alpha0=alpha,
            lr_decay=float(_typed(lr, "decay", "lr", _NUM, base.lr_decay)),
            dp=dp,
            compression=comp,
            mode=_typed(top, "mode", p, str, base.mode),
            transport=_typed(top, "transport", p, str, base.transport),
            workers=_typed(top, "workers", p, int, base.workers),
            async_=AsyncConfig(
                base_mix=_typed(asr, "base_mix", "async", (int, float, _NULL), a0.base_mix),
                max_staleness=_typed(asr, "max_staleness", "async", int, a0.max_staleness),
                max_delay=_typed(asr, "max_delay", "async", int, a0.max_delay),
                rule=_typed(asr, "rule", "async", str, a0.rule),
                shuffle=_typed(asr, "shuffle", "async", bool, a0.shuffle),
            ),
            data=DataConfig(
                m=_typed(dr, "m", "data", int, d0.m),
                dim_f=_typed(dr, "dim_f", "data", int, d0.dim_f),
                class_means=cm,
                unimodal_accuracy=float(_typed(dr, "unimodal_accuracy", "data", _NUM, d0.unimodal_accuracy)),
                noise_std=float(_typed(dr, "noise_std", "data", _NUM, d0.noise_std)),
                n_samples=_typed(dr, "n_samples", "data", int, d0.n_samples),
                threat_fraction=float(_typed(dr, "threat_fraction", "data", _NUM, d0.threat_fraction)),
                dirichlet_beta=float(_typed(dr, "dirichlet_beta", "data", _NUM, d0.dirichlet_beta)),
                train_fraction=float(_typed(dr, "train_fraction", "data", _NUM, d0.train_fraction)),
            ),
            node_weights=_typed(top, "node_weights", p, str, base.node_weights),
            threshold=float(_typed(top, "threshold", p, _NUM, base.threshold)),
            seed=_typed(top, "seed", p, int, base.seed),
            out_dir=_typed(top, "out_dir", p, str, base.out_dir),
        ).validate()

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
        return cls.from_dict(raw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}") from exc
        return cls.loads(text)
