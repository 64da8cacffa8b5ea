"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 numerical divergence,
3 failed hypothesis check under --strict.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import validate
from .errors import ConfigError, DivergenceError
from .experiments import run

THREADS_ENV = "VOLTERRA_CLT_THREADS"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="volterra-clt",
        description="Simulate small-noise stochastic Volterra systems and "
                    "measure their fluctuation statistics.")
    parser.add_argument("--config", required=True, help="experiment config file")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--seed", type=int, help="master seed (overrides config)")
    parser.add_argument("--threads", type=int,
                        help=f"worker pool size (default: {THREADS_ENV} "
                             "or hardware parallelism)")
    parser.add_argument("--strict", action="store_true",
                        help="exit 3 when a hypothesis check fails")
    parser.add_argument("--dump-trajectories", action="store_true",
                        help="write per-path trajectory CSVs")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = open(args.config).read()
    except OSError as exc:
        print(f"config error: config: cannot read {args.config}: {exc}",
              file=sys.stderr)
        return 1
    cfg, errors = validate(text)
    if cfg is None:
        for err in errors:
            print(f"config error: {err}", file=sys.stderr)
        return 1
    if args.out:
        cfg.out_dir = args.out
    if args.seed is not None:
        cfg.master_seed = args.seed
    threads = args.threads
    if threads is None:
        env = os.environ.get(THREADS_ENV)
        if env:
            try:
                threads = int(env)
            except ValueError:
                print(f"config error: {THREADS_ENV}: not an integer ({env!r})",
                      file=sys.stderr)
                return 1
    if threads is not None and threads < 1:
        print("config error: threads: must be >= 1", file=sys.stderr)
        return 1
    try:
        return run(cfg, threads=threads, strict=args.strict,
                   dump_trajectories=args.dump_trajectories)
    except ConfigError as exc:
        for msg in exc.messages:
            print(f"config error: {msg}", file=sys.stderr)
        return 1
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
