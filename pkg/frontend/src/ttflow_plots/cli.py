"""`plots scatter` / `plots corner` entry points."""

from __future__ import annotations

import argparse
import sys

from ttflow_plots.figures import corner_plot, scatter_compare


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plots", description="figures from ttflow sample CSVs")
    sub = parser.add_subparsers(dest="command", required=True)

    p_scatter = sub.add_parser("scatter",
                               help="side-by-side 2-d sample scatter")
    p_scatter.add_argument("--method", required=True)
    p_scatter.add_argument("--truth", required=True)
    p_scatter.add_argument("--out", required=True)
    p_scatter.add_argument("--lo", type=float)
    p_scatter.add_argument("--hi", type=float)

    p_corner = sub.add_parser("corner",
                              help="marginal histogram corner grid")
    p_corner.add_argument("--method", required=True)
    p_corner.add_argument("--truth", required=True)
    p_corner.add_argument("--out", required=True)
    p_corner.add_argument("--dims", type=int, nargs="+")
    p_corner.add_argument("--bins", type=int, default=50)
    p_corner.add_argument("--lo", type=float)
    p_corner.add_argument("--hi", type=float)

    args = parser.parse_args(argv)
    limits = None
    if args.lo is not None and args.hi is not None:
        limits = (args.lo, args.hi)

    try:
        if args.command == "scatter":
            scatter_compare(args.method, args.truth, args.out,
                            limits=limits)
        else:
            corner_plot(args.method, args.truth, args.dims, args.out,
                        bins=args.bins, limits=limits)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
