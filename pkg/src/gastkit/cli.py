"""Command-line entry point wiring the pipeline stages together.

Exit codes: 0 success, 1 invalid config, 2 missing artifact dependency,
3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import os
import sys

from .pipeline import (ConfigError, InvariantViolationError,
                       MissingArtifactError, STAGES, run_subcommand,
                       validate_config)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gastkit",
        description="Soundscape toolkit: synthetic corpus generation, "
                    "frequency-correlation-matrix pipeline, latent "
                    "clustering, and land-use classification.")
    parser.add_argument("subcommand", choices=STAGES)
    parser.add_argument("--config", default=None,
                        help="JSON pipeline config (defaults used if omitted)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the master seed")
    parser.add_argument("--out", default="out",
                        help="artifact output directory")
    parser.add_argument("--scale", choices=("desk", "paper"), default=None,
                        help="override model scale")
    parser.add_argument("--jobs", type=int, default=None,
                        help="parallel workers (fallback: GASTKIT_JOBS)")
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    jobs = args.jobs
    if jobs is None:
        jobs = int(os.environ.get("GASTKIT_JOBS", "1"))
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.scale is not None:
        overrides["scale"] = args.scale
    try:
        config = validate_config(args.config if args.config else {},
                                 overrides)
        return run_subcommand(args.subcommand, config, args.out, jobs)
    except ConfigError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return 1
    except MissingArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InvariantViolationError as exc:
        print(f"error: invariant violated: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
