"""Command line entry point: ``depth-ntk run <spec.json> [--jobs N] [--seed S]``."""
from __future__ import annotations

import argparse
import json
import sys

from .errors import (
    DegenerateKernelError, DivergenceError, FormatError, IterationLimitError, NumericError, NumericOverflowError,
    SingularKernelError, ValidationError,
)
from .experiments import DATA_ROOT_ENV, EXPERIMENTS, execute, parse_spec

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="depth-ntk",
        description=f"Run an NTK_(d) experiment. Relative dataset paths resolve against ${DATA_ROOT_ENV}.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help=f"run one experiment ({', '.join(EXPERIMENTS)})")
    run.add_argument("spec", help="experiment spec (JSON)")
    run.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    run.add_argument("--seed", type=int, default=None, help="override the spec's base seed")
    return parser


def run(spec_path: str, jobs: int = 1, seed: int | None = None) -> int:
    try:
        with open(spec_path) as fh:
            doc = json.load(fh)
        if jobs < 1:
            raise ValidationError("--jobs must be >= 1")
        spec = parse_spec(doc, seed_override=seed)
    except (OSError, json.JSONDecodeError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        summary = execute(spec, jobs)
    except (ValidationError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (DegenerateKernelError, NumericOverflowError, NumericError, SingularKernelError, DivergenceError, IterationLimitError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run(args.spec, args.jobs, args.seed)


if __name__ == "__main__":
    sys.exit(main())
