"""Command-line entry point: ``qoidesign {optimize,invert,converge,predict} CONFIG``.

Exit codes: 0 success, 2 configuration error, 3 model or numerical failure,
4 empty inverse support.
"""
from __future__ import annotations

import argparse
import logging
import sys
import warnings

from . import pipeline
from .config import ExperimentConfig
from .errors import (
    ConfigError,
    EmptySupportError,
    IllConditionedNeighborhoodError,
    InvalidArgumentError,
    NoValidSitesError,
    NumericalFailureError,
    QoIDesignError,
)
from .optimize import OBJECTIVES

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_EMPTY = 0, 2, 3, 4

COMMANDS = {
    "optimize": pipeline.run_optimize,
    "invert": pipeline.run_invert,
    "converge": pipeline.run_converge,
    "predict": pipeline.run_predict,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="qoidesign",
                                     description="Optimal QoI selection for stochastic inverse problems.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or "").strip().splitlines()[0])
        p.add_argument("config", help="experiment configuration (JSON)")
        p.add_argument("--seed", type=int, help="override sampling.seed")
        p.add_argument("--out", help="override output_dir")
        p.add_argument("--threads", type=int, default=1, help="parallelism cap (default 1)")
        p.add_argument("--objective", choices=OBJECTIVES, help="override design.objective")
    return parser


def _fail(code, message):
    print(f"error: {message}", file=sys.stderr)
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        return _fail(EXIT_CONFIG, "--threads: must be >= 1")
    # validate fully before anything touches the output directory
    try:
        cfg = ExperimentConfig.load(args.config).with_overrides(args.seed, args.out, args.objective)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            COMMANDS[args.command](cfg, workers=args.threads)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
    except EmptySupportError as exc:
        return _fail(EXIT_EMPTY, f"empty support: {exc}")
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except (NumericalFailureError, IllConditionedNeighborhoodError, NoValidSitesError) as exc:
        where = getattr(exc, "sample_index", None)
        suffix = f" (sample {where})" if where is not None else ""
        return _fail(EXIT_NUMERICAL, f"{exc}{suffix}")
    except (InvalidArgumentError, QoIDesignError) as exc:
        return _fail(EXIT_CONFIG, str(exc))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
