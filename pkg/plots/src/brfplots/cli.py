"""Standalone renderer entry point: pick a figure kind, point at artifacts."""

from __future__ import annotations

import argparse
import sys

from .figures import FIGURE_KINDS, FigureSpec, render
from .io import SchemaError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="brfnet-plots",
        description="Render paper-style figures from brfnet CSV artifacts")
    parser.add_argument("--kind", required=True, choices=FIGURE_KINDS)
    parser.add_argument("--in", dest="inputs", nargs="+", required=True,
                        help="input artifact CSV path(s)")
    parser.add_argument("--out", required=True, help="output image (png/svg)")
    parser.add_argument("--labels", nargs="*", default=[])
    parser.add_argument("--metric", default="test_acc",
                        help="metric column for curve figures")
    parser.add_argument("--title", default="")
    parser.add_argument("--dpi", type=int, default=150)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = FigureSpec(kind=args.kind, inputs=args.inputs, output=args.out,
                      labels=args.labels, metric=args.metric,
                      title=args.title, dpi=args.dpi)
    try:
        out = render(spec)
    except (SchemaError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"figure written: {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
