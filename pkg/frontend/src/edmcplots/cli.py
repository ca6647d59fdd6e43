"""``edmc-plots render --kind <phase|perturb|trajectory|protein> --in ... --out ...``"""

from __future__ import annotations

import argparse
import sys

from edmcplots.render import RENDERERS, FigureSpec, SchemaError, render


def build_parser():
    parser = argparse.ArgumentParser(
        prog="edmc-plots", description="Render experiment CSVs into figures."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("render", help="render one CSV into one image")
    p.add_argument("--kind", required=True, choices=sorted(RENDERERS))
    p.add_argument("--in", dest="input", required=True, help="input CSV path")
    p.add_argument("--out", required=True, help="output image path (.png, .pdf, ...)")
    p.add_argument("--title", default="")
    p.add_argument("--dpi", type=int, default=150)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    spec = FigureSpec(kind=args.kind, title=args.title, dpi=args.dpi)
    try:
        render(args.input, args.out, spec)
    except (OSError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
