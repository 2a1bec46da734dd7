"""
Command-line entry point: `swda <stage> --config <path> [--seed N] [--out DIR]`.

`swda all` runs the full stage chain.  Exit codes: 0 success, 2 config error,
3 stage failure.  If --out is absent the SWDA_OUT environment variable is
used, falling back to ./swda_out.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import ConfigError, ExperimentConfig, load_config
from .pipeline import STAGES, StageError, run_all, run_stage

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swda",
        description="Stochastic shallow-water calibration and data assimilation pipeline",
    )
    parser.add_argument("stage", choices=STAGES + ["all"], help="pipeline stage to run")
    parser.add_argument("--config", help="experiment config file (INI format)")
    parser.add_argument("--seed", type=int, help="override the master seed")
    parser.add_argument("--out", help="output directory (default: $SWDA_OUT or ./swda_out)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            cfg.seed = args.seed
        cfg.validate()
    except ConfigError as exc:
        print(f"swda: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = args.out or os.environ.get("SWDA_OUT") or "swda_out"
    try:
        if args.stage == "all":
            run_all(cfg, out_dir)
        else:
            outputs = run_stage(cfg, args.stage, out_dir)
            print(f"swda {args.stage}: wrote {', '.join(outputs)}")
    except StageError as exc:
        print(f"swda: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except Exception as exc:  # stage blow-ups surface as failures, not tracebacks
        print(f"swda: stage {args.stage} failed: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
