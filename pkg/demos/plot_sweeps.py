"""
Dataset-size, node-count and model comparisons
==============================================

The runner's sweeps produce plot-ready CSV files. Here we run small
versions and print the trend rows.
"""

import tempfile
from dataclasses import replace
from pathlib import Path

from fedthreat.runner import ExperimentConfig, compare_models, sweep_dataset_size, sweep_nodes

config = replace(ExperimentConfig(), rounds=20)
out = Path(tempfile.mkdtemp())

_, trend = sweep_dataset_size(config, [1_000, 10_000, 30_000], seeds=[0, 1], out_dir=out)
for row in trend:
    print(f"n={row['n_samples']:6d}  accuracy {row['accuracy']:.4f}")

_, trend = sweep_nodes(config, [1, 2, 5, 10], seeds=[0], out_dir=out)
for row in trend:
    print(f"N={row['num_clients']:2d}  accuracy {row['accuracy']:.4f}  train {row['train_seconds']:.3f}s")

rows, _ = compare_models(config, seeds=[0, 1], out_dir=out)
for row in rows:
    print(f"{row['model']:22s} accuracy {row['accuracy']:.4f}  FPR {row['fpr']:.4f}  FNR {row['fnr']:.4f}")

print("CSV files in", out, ":", sorted(p.name for p in out.glob("*.csv")))
