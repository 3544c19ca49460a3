"""``thermalsim-plot`` command line entry point."""

from __future__ import annotations

import argparse
import sys

from .figures import ALL_FIGURES, render_figure
from .io import SchemaError

EXIT_OK = 0
EXIT_ERROR = 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="thermalsim-plot",
        description="Render figures from thermalsim CSV output.",
    )
    parser.add_argument(
        "--figures", default="all",
        help="'all' or a comma-separated list of figure ids "
             "(" + ", ".join(sorted(ALL_FIGURES)) + ")",
    )
    parser.add_argument(
        "--in", dest="in_dir", required=True,
        help="directory holding the simulator's CSV output (searched "
             "recursively, so the out/ root or a single experiment "
             "directory both work)",
    )
    parser.add_argument("--out", dest="out_dir", default="figures",
                        help="directory for the rendered PNG files")
    parser.add_argument("--dpi", type=int, default=150)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.figures.strip() == "all":
        requested = list(ALL_FIGURES)
        skip_missing = True
    else:
        requested = [fig_id.strip() for fig_id in args.figures.split(",")
                     if fig_id.strip()]
        skip_missing = False
        unknown = [fig_id for fig_id in requested if fig_id not in ALL_FIGURES]
        if not requested or unknown:
            print(
                "thermalsim-plot: unknown figure id(s): "
                + (", ".join(unknown) if unknown else "(none given)")
                + "; known ids: " + ", ".join(sorted(ALL_FIGURES)),
                file=sys.stderr,
            )
            return EXIT_ERROR

    written = []
    for fig_id in requested:
        try:
            target = render_figure(fig_id, args.in_dir, args.out_dir, args.dpi)
        except SchemaError as error:
            if skip_missing:
                # 'all' renders whatever the input directory supports (a run
                # without --large has no 6-site fans, for instance)
                print(f"thermalsim-plot: skipping {fig_id}: {error}")
                continue
            print(f"thermalsim-plot: {error}", file=sys.stderr)
            return EXIT_ERROR
        written.append(target)
        print(f"thermalsim-plot: wrote {target}")
    if not written:
        print("thermalsim-plot: no figure could be rendered from "
              f"{args.in_dir}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
