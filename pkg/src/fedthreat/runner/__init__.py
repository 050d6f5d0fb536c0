"""Config-driven experiment runner and CLI."""

from .config import AsyncConfig, ConfigError, DataConfig, ExperimentConfig
from .experiment import (
    METRIC_COLUMNS,
    SUMMARY_COLUMNS,
    RoundRow,
    RunReport,
    compare_models,
    prepare,
    run,
    run_centralized,
    sweep_dataset_size,
    sweep_nodes,
    train_centralized,
    train_federated,
)

__all__ = [
    "METRIC_COLUMNS",
    "SUMMARY_COLUMNS",
    "AsyncConfig",
    "ConfigError",
    "DataConfig",
    "ExperimentConfig",
    "RoundRow",
    "RunReport",
    "compare_models",
    "prepare",
    "run",
    "run_centralized",
    "sweep_dataset_size",
    "sweep_nodes",
    "train_centralized",
    "train_federated",
]
