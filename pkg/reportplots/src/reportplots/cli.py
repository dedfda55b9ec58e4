"""Command-line wrapper: reportplots --input DIR --output DIR [--figures ...]"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .render import FIGURE_IDS, render


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="reportplots",
        description="Render figures from a serverprof CSV artifact directory.",
    )
    parser.add_argument("--input", required=True, help="artifact directory with the CSVs")
    parser.add_argument("--output", required=True, help="directory for the PNG files")
    parser.add_argument(
        "--figures",
        default=None,
        help=f"comma-separated subset of: {','.join(FIGURE_IDS)}",
    )
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1

    figure_ids = args.figures.split(",") if args.figures else None
    try:
        report = render(Path(args.input), Path(args.output), figure_ids)
    except ValueError as exc:
        print(f"reportplots: {exc}", file=sys.stderr)
        return 1
    for figure_id, result in report.rendered.items():
        print(f"rendered {figure_id} -> {result.path}")
    if not report.ok:
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
