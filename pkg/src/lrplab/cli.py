"""Command-line entry point.

Exit codes: 0 success (including cache hits), 1 invariant violation,
2 configuration error, 3 numeric validity failure.
"""

from __future__ import annotations

import argparse
import sys

from .config import COMMANDS, ExperimentConfig
from .errors import ConfigurationError, InvariantViolation, NumericValidityError
from .pipelines import run_config
from .plots import emit_plot_data

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="lrp",
        description="simulation lab for critical long-range percolation on Z",
    )
    sub = ap.add_subparsers(dest="subcommand", required=True)
    for cmd in COMMANDS:
        p = sub.add_parser(cmd, help=f"run the {cmd} stage from a config file")
        p.add_argument("--config", required=True, help="TOML or JSON config")
        p.add_argument("--force", action="store_true",
                       help="discard any cached record and rerun")
        p.add_argument("--threads", type=int, default=1,
                       help="worker processes (results do not depend on this)")
        p.add_argument("--out", default=None,
                       help="override the cache root directory")
    p = sub.add_parser("plot", help="emit plot data from a finished record")
    p.add_argument("--record", required=True, help="record directory")
    p.add_argument("--which", required=True,
                   help="lambda, spectral, exit, tails, or goodradius")
    p.add_argument("--svg", action="store_true", help="also render SVG figures")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.subcommand == "plot":
            for path in emit_plot_data(args.record, args.which, svg=args.svg):
                print(path)
            return EXIT_OK
        try:
            cfg = ExperimentConfig.load(args.config)
        except OSError as exc:
            raise ConfigurationError(
                f"cannot read config {args.config}: {exc}"
            ) from exc
        if cfg.command != args.subcommand:
            raise ConfigurationError(
                f"config declares command {cfg.command!r} but the CLI "
                f"subcommand is {args.subcommand!r}"
            )
        cfg.validate()
        if args.threads < 1:
            raise ConfigurationError("--threads: must be >= 1")
        rdir = run_config(cfg, force=args.force, threads=args.threads,
                          out_override=args.out)
        print(rdir)
        return EXIT_OK
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericValidityError as exc:
        print(f"numeric validity error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
