"""Command-line entry point: ``ergoreg <subcommand> [--config PATH] [--out DIR] ...``.

Exit codes: 0 success, 2 configuration error, 3 invariant violation.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import List, Optional

from .errors import ConfigError
from .experiments import ExperimentConfig, emit_csv, emit_metadata, run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VIOLATION = 3

SUBCOMMANDS = {
    "sweep-t": "sweep_T",
    "sweep-munu": "sweep_munu",
    "mc-validate": "mc_validate",
    "lower-bounds": "lower_bounds",
    "inequalities": "inequalities",
    "norms": "norms",
}


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON configuration (schema: 1)")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory (default: .)")
    common.add_argument("--seed", type=_u64, help="override the configured seed")
    common.add_argument("--threads", type=_positive, help="worker threads (default: $ERGOREG_THREADS or 1)")

    parser = argparse.ArgumentParser(prog="ergoreg", description="Averages over integrable flows: norms, bounds, "
                                     "Monte Carlo checks.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, exp in SUBCOMMANDS.items():
        sub.add_parser(name, parents=[common], help=f"run the {exp} experiment")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    experiment = SUBCOMMANDS[args.command]
    try:
        if args.config is not None:
            cfg = ExperimentConfig.from_json(args.config, experiment)
        else:
            cfg = ExperimentConfig.default(experiment)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        result = run(cfg, args.threads)
    except ConfigError as exc:
        print(f"ergoreg: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = args.out
    try:
        out.mkdir(parents=True, exist_ok=True)
        csv_path = emit_csv(result, out / f"{experiment}.csv")
        meta_path = emit_metadata(result, out / f"{experiment}.json")
    except OSError as exc:
        print(f"ergoreg: {exc}", file=sys.stderr)
        return 1
    print(f"{len(result.rows)} rows -> {csv_path}")
    print(f"metadata -> {meta_path}")
    if result.violations:
        for v in result.violations:
            print(f"violation: {v}", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
