"""plot-report: render agreement-report figures from the command line."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .render import render_report
from .schema import ReportBundle, SchemaError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plot-report",
        description="Render radar / forest / Bland-Altman / CP-TDI figures "
                    "from petquant agreement reports.",
    )
    parser.add_argument("--reports", type=Path, nargs="+", required=True,
                        help="agreement JSON files, one per configuration")
    parser.add_argument("--labels", nargs="+", default=None,
                        help="display label per report (default: file stems)")
    parser.add_argument("--out", type=Path, required=True,
                        help="output directory for the figures")
    parser.add_argument("--format", choices=("svg", "png"), default="svg",
                        help="image format (default: %(default)s)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    labels = args.labels if args.labels is not None else [p.stem for p in args.reports]
    try:
        bundle = ReportBundle(
            report_paths=tuple(args.reports),
            labels=tuple(labels),
            out_dir=args.out,
            image_format=args.format,
        )
        outputs = render_report(bundle)
    except (SchemaError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for name, path in sorted(outputs.items()):
        print(f"{name}: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
