"""Command-line launcher for the built-in models.

  sflx-bridge const LABEL [--score X]
  sflx-bridge kofs --k K --s "0,1,2" [--bg 0] [--target y-target] [--other other]

The process serves the protocol on stdin/stdout until EOF.
"""

import argparse
import sys

from .models import constant_model, kofs_model
from .protocol import serve

__all__ = ["main"]


def _parse_ints(text: str) -> list[int]:
    if text.startswith("@"):
        with open(text[1:], "r", encoding="utf-8") as f:
            text = f.read()
    return [int(p) for p in text.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sflx-bridge",
        description="Serve a toy model over the sflx-bridge stdin/stdout protocol.",
    )
    sub = parser.add_subparsers(dest="model", required=True)

    p = sub.add_parser("const", help="answer a fixed label")
    p.add_argument("label")
    p.add_argument("--score", type=float, default=None)

    p = sub.add_parser("kofs", help="k-of-S presence model")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--s", required=True, help="secret pixel indices, comma separated or @file")
    p.add_argument("--bg", default="0", help="background bytes, e.g. '0' or '1,2,3'")
    p.add_argument("--target", default="y-target")
    p.add_argument("--other", default="other")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.model == "const":
        model = constant_model(args.label, args.score)
    else:
        model = kofs_model(
            _parse_ints(args.s), args.k, _parse_ints(args.bg), args.target, args.other
        )
    return serve(model)


if __name__ == "__main__":
    sys.exit(main())
