"""Command-line entry point.

Usage::

    thermalsim <experiment> [--config FILE] [--set key=value]...
               [--out DIR] [--seed N] [--threads N] [--large] [--force]

Exit codes: 0 success, 1 configuration error, 2 numerical-invariant
failure, 3 I/O error (including refusing to overwrite a finished run).
"""

from __future__ import annotations

import argparse
import sys

from .config import EXPERIMENTS, apply_overrides, build_config, parse_config_file
from .errors import ConfigError, ConvergenceFailure, InvariantViolation
from .experiments import run_experiment

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="thermalsim",
        description="Collision-model thermal state preparation experiments",
    )
    parser.add_argument("experiment",
                        help="experiment to run; one of: "
                             + ", ".join(sorted(EXPERIMENTS)))
    parser.add_argument("--config", metavar="FILE",
                        help="key=value configuration file")
    parser.add_argument("--set", metavar="KEY=VALUE", action="append",
                        default=[], dest="overrides",
                        help="override one configuration key (repeatable)")
    parser.add_argument("--out", metavar="DIR",
                        help="output directory (default ./out/<experiment>)")
    parser.add_argument("--seed", type=int, help="base RNG seed")
    parser.add_argument("--threads", type=int,
                        help="worker threads for sweep points (0 = serial)")
    parser.add_argument("--large", action="store_true",
                        help="enable the long 6-site variants")
    parser.add_argument("--force", action="store_true",
                        help="overwrite an existing run in the output directory")
    return parser


def _config_from_args(args):
    raw = parse_config_file(args.config) if args.config else {}
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.threads is not None:
        overrides.append(f"threads={args.threads}")
    if args.large:
        overrides.append("large=true")
    if args.force:
        overrides.append("force=true")
    return build_config(args.experiment, apply_overrides(raw, overrides))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _config_from_args(args)
    except ConfigError as exc:
        print(f"thermalsim: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"thermalsim: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    out_dir = args.out if args.out else f"out/{config.experiment}"
    try:
        manifest = run_experiment(config, out_dir)
    except ConfigError as exc:
        print(f"thermalsim: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InvariantViolation, ConvergenceFailure) as exc:
        print(f"thermalsim: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, FileExistsError) as exc:
        print(f"thermalsim: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    files = ", ".join(sorted(manifest["files"]))
    print(f"thermalsim {config.experiment}: wrote {files} to {out_dir} "
          f"in {manifest['wall_seconds']}s")
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
