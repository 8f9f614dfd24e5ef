"""Command-line entry point: mlamp-plots --input ... --kind ... --output ..."""

from __future__ import annotations

import argparse
import sys

from .csvio import CsvError, read_csv
from .render import KINDS, PlotError, render


def parse_input(spec: str):
    """'PATH' or 'PATH@key=value[,key=value...]' -> (path, metadata)."""
    path, _, tail = spec.partition("@")
    meta = {}
    if tail:
        for item in tail.split(","):
            key, eq, value = item.partition("=")
            if not eq or not key:
                raise PlotError(f"bad input annotation {item!r} in {spec!r} "
                                "(expected key=value)")
            meta[key] = value
    return path, meta


def _parser():
    parser = argparse.ArgumentParser(
        prog="mlamp-plots",
        description="Render ML-AMP experiment CSVs: phase diagrams, MSE "
                    "curves and free-energy scans.")
    parser.add_argument("--input", action="append", required=True,
                        metavar="PATH[@key=value]",
                        help="input CSV; repeat for overlays. Instance CSVs "
                             "joined to an MSE axis need @x=VALUE.")
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--output", required=True, help="image file to write")
    parser.add_argument("--title")
    parser.add_argument("--x-label")
    parser.add_argument("--y-label")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        tables = []
        for spec in args.input:
            path, meta = parse_input(spec)
            tables.append((read_csv(path), meta))
        render(args.kind, tables, args.output,
               opts=dict(title=args.title, x_label=args.x_label,
                         y_label=args.y_label))
    except (CsvError, PlotError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"wrote {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
