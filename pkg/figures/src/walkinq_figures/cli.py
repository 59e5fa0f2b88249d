"""Command line for rendering walkinq result files into images."""

from __future__ import annotations

import argparse
import sys
from typing import Sequence

from .figures import KINDS, FigureSpec, render
from .io import InputError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="walkinq-figures",
        description="Render equilibrium JSON / sweep CSV files into PNG or SVG.",
    )
    parser.add_argument("--input", required=True, help="result file with manifest sidecar")
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--out", required=True, help="image path (.png or .svg)")
    parser.add_argument("--title", default=None)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        path = render(
            FigureSpec(
                input_path=args.input,
                kind=args.kind,
                output_path=args.out,
                title=args.title,
            )
        )
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 5
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
