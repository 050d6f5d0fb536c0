"""Command-line entry point.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from ..federation.protocol import ProtocolError
from .config import ConfigError, ExperimentConfig
from .experiment import compare_models, run, sweep_dataset_size, sweep_nodes

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

log = logging.getLogger("fedthreat")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="experiment config (JSON)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out-dir", help="override the output directory")
    common.add_argument("--mode", choices=["sim", "socket"], help="transport: in-process simulation or localhost sockets")
    common.add_argument("--seeds", type=int, nargs="+", help="average over these seeds (sweeps and compare)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="fedthreat", description="Federated multimodal threat-detection experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run one experiment")
    size = sub.add_parser("sweep-size", parents=[common], help="accuracy vs dataset size")
    size.add_argument("--sizes", type=int, nargs="+", required=True)
    nodes = sub.add_parser("sweep-nodes", parents=[common], help="training time and accuracy vs number of clients")
    nodes.add_argument("--nodes", type=int, nargs="+", required=True)
    sub.add_parser("compare", parents=[common], help="four-way model comparison table")
    return parser


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out_dir is not None:
        changes["out_dir"] = args.out_dir
    if args.mode is not None:
        changes["transport"] = args.mode
    return replace(cfg, **changes).validate() if changes else cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "run":
            report = run(cfg)
            print(f"final accuracy {report.final.accuracy:.4f}; outputs in {report.out_dir}")
        elif args.command == "sweep-size":
            _, trend = sweep_dataset_size(cfg, args.sizes, args.seeds)
            for row in trend:
                print(f"n={row['n_samples']}: accuracy {row['accuracy']:.4f}")
        elif args.command == "sweep-nodes":
            _, trend = sweep_nodes(cfg, args.nodes, args.seeds)
            for row in trend:
                print(f"N={row['num_clients']}: accuracy {row['accuracy']:.4f}, train {row['train_seconds']:.3f}s")
        else:
            rows, _ = compare_models(cfg, args.seeds)
            for row in rows:
                print(f"{row['model']:22s} accuracy {row['accuracy']:.4f}")
    except (ConfigError, ValueError) as exc:
        if isinstance(exc, ConfigError) or args.command != "run":
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ProtocolError as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - exit-code contract allows only 0/2/3
        log.debug("unexpected failure", exc_info=True)
        print(f"runtime error: {exc!r}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def entry() -> None:
    sys.exit(main())
