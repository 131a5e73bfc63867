"""Command line: ``plotfigs render --csv results.csv --figure fig3 --out out.svg``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .render import FIGURES, FigureSpec, NoRowsError, SchemaError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plotfigs", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")
    r = sub.add_parser("render", help="render a figure from a result CSV")
    r.add_argument("--csv", required=True, type=Path, help="input result CSV")
    r.add_argument("--figure", required=True, choices=FIGURES, help="figure kind")
    r.add_argument("--out", required=True, type=Path, help="output image path (.svg or .png)")
    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    if args.command != "render":
        parser.print_usage(sys.stderr)
        return 1
    try:
        out = render(FigureSpec(input_csv=args.csv, figure=args.figure, output=args.out))
    except (SchemaError, NoRowsError, ValueError) as exc:
        print(f"plotfigs: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":  # pragma: no cover
    main()
