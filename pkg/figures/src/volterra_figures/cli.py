"""One command per figure kind; flags --in, --out, --title; exits 0/1."""

from __future__ import annotations

import argparse
import sys

from .io import SchemaError
from .plots import FigureJob, render


def _run(kind: str, argv) -> int:
    parser = argparse.ArgumentParser(prog=f"volterra-fig-{kind}")
    parser.add_argument("--in", dest="inputs", nargs="+", required=True,
                        help="input CSV file(s)")
    parser.add_argument("--out", dest="output", required=True,
                        help="output image path")
    parser.add_argument("--title", default="")
    args = parser.parse_args(argv)
    job = FigureJob(input_csv=tuple(args.inputs), figure_kind=kind,
                    output_image=args.output, title=args.title)
    try:
        summary = render(job)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(summary)
    return 0


def main_rate(argv=None) -> int:
    return _run("rate", argv)


def main_moments(argv=None) -> int:
    return _run("moments", argv)


def main_trajectories(argv=None) -> int:
    return _run("trajectories", argv)


def main_covariance(argv=None) -> int:
    return _run("covariance", argv)
