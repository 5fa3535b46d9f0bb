"""Command-line entry point: ``wsmpc {identify,predict,control,sweep}``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import BENCHMARKS, load_config
from .errors import WsmpcError
from .experiments import run_command

COMMANDS = ("identify", "predict", "control", "sweep")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wsmpc", description="Sparse model identification and model-predictive control "
        "experiments on benchmark plants.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="TOML file layered over benchmark defaults")
        p.add_argument("--benchmark", choices=BENCHMARKS,
                       help="benchmark when the config file does not name one")
        p.add_argument("--seed", type=int, help="override the configured base seed")
        p.add_argument("--workers", type=int, default=1, help="process-pool size")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--oracle", action="store_true",
                       help="use the true plant as the controller model")
        p.add_argument("--timing", action="store_true",
                       help="record solver wall times in control logs")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    try:
        cfg = load_config(args.config, args.benchmark, overrides)
        out = args.out if args.out is not None else Path(cfg.out)
        results = run_command(cfg, args.command, out, args.workers, args.oracle, args.timing)
    except WsmpcError as exc:
        print(f"wsmpc: error: {exc}", file=sys.stderr)
        return 2
    for kind, records in results.items():
        bad = sum(r["status"] != "ok" for r in records)
        print(f"{kind}: {len(records)} runs, {bad} failed, written to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
