"""Command-line figure renderer for emlab outputs.

Usage: emlab-plot --trace trace.csv --summary summary.json --kind rate --out fig.png
"""

from __future__ import annotations

import argparse
import sys

from .render import KINDS, FigureSpec, PlotDataError, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="emlab-plot", description=__doc__)
    parser.add_argument("--trace", required=True, help="trace.csv from an emlab run")
    parser.add_argument("--summary", required=True, help="summary.json from the same run")
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--out", required=True, help="output image path (PNG)")
    args = parser.parse_args(argv)
    spec = FigureSpec(
        trace_path=args.trace, summary_path=args.summary, kind=args.kind, out_path=args.out
    )
    try:
        out = render(spec)
    except (PlotDataError, OSError) as exc:
        print(f"emlab-plot: {exc}", file=sys.stderr)
        return 1
    print(f"emlab-plot: wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
