"""Command-line figure generation from simulator artifacts.

``uavfedsim-plots accuracy --runs DIR --out DIR`` renders one
accuracy-curve figure per community; ``uavfedsim-plots trajectory
--plans FILE... --out DIR`` renders one snapshot per plans file. Schema
violations exit nonzero with a message naming the file and column/key.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .artifacts import SchemaError
from .figures import ACCURACY_CURVES, TRAJECTORY_SNAPSHOT, PlotJob, plot_accuracy, plot_trajectory


def _parse_window(text: str) -> tuple[int, int]:
    first, sep, last = text.partition("..")
    if not sep:
        value = int(text)
        return value, value
    return int(first), int(last)


def cmd_accuracy(args: argparse.Namespace) -> int:
    job = PlotJob(
        inputs=tuple(args.runs), out_dir=Path(args.out), kind=ACCURACY_CURVES
    )
    result = plot_accuracy(job)
    if not args.quiet:
        for community in sorted(result):
            print(f"wrote {result[community]['path']}")
    return 0


def cmd_trajectory(args: argparse.Namespace) -> int:
    window = _parse_window(args.rounds) if args.rounds else None
    job = PlotJob(
        inputs=tuple(args.plans), out_dir=Path(args.out),
        kind=TRAJECTORY_SNAPSHOT, round_window=window,
    )
    results = plot_trajectory(job)
    if not args.quiet:
        for record in results:
            print(f"wrote {record['path']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uavfedsim-plots",
        description="Render figures from uavfedsim run artifacts",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_acc = sub.add_parser("accuracy", help="per-community accuracy curves")
    p_acc.add_argument(
        "--runs", nargs="+", required=True,
        help="metrics CSV files, directories, or glob patterns",
    )
    p_acc.add_argument("--out", default=".", help="output image directory")
    p_acc.add_argument("--quiet", action="store_true")
    p_acc.set_defaults(func=cmd_accuracy)

    p_traj = sub.add_parser("trajectory", help="trajectory snapshots")
    p_traj.add_argument(
        "--plans", nargs="+", required=True,
        help="plans JSON files, directories, or glob patterns",
    )
    p_traj.add_argument(
        "--rounds", help="round window A..B (default: all dumped rounds)"
    )
    p_traj.add_argument("--out", default=".", help="output image directory")
    p_traj.add_argument("--quiet", action="store_true")
    p_traj.set_defaults(func=cmd_trajectory)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SchemaError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
