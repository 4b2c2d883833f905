"""`mvplots render --kind KIND --in ARTIFACT [ARTIFACT ...] --out FILE.svg`."""

from __future__ import annotations

import argparse
import sys

from .render import FIGURE_KINDS, ArtifactError, FigureSpec, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mvplots", description="Render figures from mvstable artifacts."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("render", help="render one figure")
    p.add_argument("--kind", required=True, choices=FIGURE_KINDS)
    p.add_argument("--in", dest="inputs", required=True, nargs="+")
    p.add_argument("--out", required=True)
    args = parser.parse_args(argv)
    try:
        spec = FigureSpec(kind=args.kind, inputs=tuple(args.inputs), output=args.out)
        render(spec)
    except ArtifactError as exc:
        print(f"render error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
