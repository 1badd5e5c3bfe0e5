"""Command-line entry point.

Subcommands
-----------
``run``        one mission -> metrics CSV + summary JSON
``mc``         Monte-Carlo sweep -> per-run files + aggregate summary
``fit-per``    logistic link-failure fit diagnostics -> report CSV
``dump-plan``  per-round trajectory/schedule records -> plans JSON

The output directory comes from ``--out``, else the ``UAVFEDSIM_OUT``
environment variable, else the working directory. All outputs are
deterministic functions of (config, arguments, seeds); exit status is 0
only when every requested artifact was written.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import channel, mission
from .world import ServiceConfig, load_config

_EXIT_OK = 0
_EXIT_ERROR = 1


def _resolve_out(arg: str | None) -> Path:
    out = arg or os.environ.get("UAVFEDSIM_OUT") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load(config_arg: str | None) -> ServiceConfig:
    if config_arg is None:
        return ServiceConfig()
    return load_config(config_arg)


def parse_seed_range(text: str) -> list[int]:
    """Parse ``N`` into [N] and ``A..B`` into the inclusive range A..B."""
    if ".." in text:
        first, _, last = text.partition("..")
        try:
            lo, hi = int(first), int(last)
        except ValueError as exc:
            raise ValueError(f"seeds: expected N or A..B, got {text!r}") from exc
        return list(range(lo, hi + 1))
    try:
        return [int(text)]
    except ValueError as exc:
        raise ValueError(f"seeds: expected N or A..B, got {text!r}") from exc


def _parse_strategies(text: str) -> list[str]:
    names = [part.strip() for part in text.split(",") if part.strip()]
    for name in names:
        if name not in mission.STRATEGIES:
            raise ValueError(
                f"unknown strategy {name!r}; choose from {', '.join(mission.STRATEGIES)}"
            )
    if not names:
        raise ValueError("strategies: expected a comma-separated list")
    return names


def _write_run_outputs(log: mission.MetricsLog, out: Path) -> list[Path]:
    csv_path = out / f"metrics_{log.strategy}_{log.seed}.csv"
    json_path = out / f"summary_{log.strategy}_{log.seed}.json"
    mission.write_metrics_csv(log, csv_path)
    mission.write_summary_json(log, json_path)
    return [csv_path, json_path]


def _write_plans(log: mission.MetricsLog, out: Path) -> Path:
    path = out / f"plans_{log.strategy}_{log.seed}.json"
    payload = {
        "strategy": log.strategy,
        "seed": log.seed,
        "config_hash": log.config_hash,
        "plans": log.plan_records,
    }
    path.write_text(json.dumps(payload, indent=2) + "\n")
    return path


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _load(args.config)
    seed = cfg.rng_seed if args.seed is None else args.seed
    out = _resolve_out(args.out)
    log = mission.run_mission(cfg, args.strategy, seed, dump_rounds=args.dump_plans)
    written = _write_run_outputs(log, out)
    if args.dump_plans:
        written.append(_write_plans(log, out))
    if not args.quiet:
        finals = " ".join(
            f"community {c}: {acc:.4f}" for c, acc in sorted(log.final_accuracy.items())
        )
        print(f"{log.strategy} seed {seed}: {log.rounds} rounds, "
              f"{log.total_distance:.0f} m flown; final accuracy {finals}")
        for path in written:
            print(f"wrote {path}")
    return _EXIT_OK


def cmd_mc(args: argparse.Namespace) -> int:
    cfg = _load(args.config)
    strategies = _parse_strategies(args.strategies)
    seeds = parse_seed_range(args.seeds)
    out = _resolve_out(args.out)
    summary, logs = mission.monte_carlo(cfg, strategies, seeds)
    written = []
    for log in logs:
        written.extend(_write_run_outputs(log, out))
    summary_path = out / "mc_summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    written.append(summary_path)
    if not args.quiet:
        for strategy in strategies:
            block = summary["strategies"][strategy]
            mean = block["mean_final_over_communities"]
            print(f"{strategy:12s} mean final accuracy over communities: {mean:.4f}")
        print(f"wrote {len(written)} files to {out}")
    return _EXIT_OK


def cmd_fit_per(args: argparse.Namespace) -> int:
    cfg = _load(args.config)
    diagonal = float(np.hypot(cfg.area_width, cfg.area_height))
    fit = channel.fit_logistic_per(
        cfg.propagation, cfg.uav_altitude, np.linspace(0.0, diagonal, 60)
    )
    out = _resolve_out(args.out)
    distances = np.linspace(0.0, diagonal, args.points)
    origin = np.zeros(2)
    points = np.stack([distances, np.zeros_like(distances)], axis=-1)
    angles = channel.elevation_angle(origin, cfg.uav_altitude, points)
    exact = channel.per_upper_bound(origin, points, cfg.propagation, cfg.uav_altitude)
    approx = channel.approx_per(angles, fit)
    max_abs_error = float(np.max(np.abs(approx - exact)))

    path = out / "fit_report.csv"
    lines = ["distance,elevation_deg,exact_per,approx_per"]
    for d, theta, qc, qt in zip(distances, angles, exact, approx):
        lines.append(f"{float(d)!r},{float(theta)!r},{float(qc)!r},{float(qt)!r}")
    path.write_text("\n".join(lines) + "\n", newline="\n")

    if not args.quiet:
        print(f"slope = {fit.slope!r}")
        print(f"offset = {fit.offset!r}")
        print(f"max_abs_error = {max_abs_error!r}")
        print(f"wrote {path}")
    return _EXIT_OK


def cmd_dump_plan(args: argparse.Namespace) -> int:
    cfg = _load(args.config)
    seed = cfg.rng_seed if args.seed is None else args.seed
    out = _resolve_out(args.out)
    log = mission.run_mission(cfg, args.strategy, seed, dump_rounds=args.rounds)
    path = _write_plans(log, out)
    if not args.quiet:
        print(f"wrote {len(log.plan_records)} round plans to {path}")
    return _EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uavfedsim",
        description="UAV-orchestrated federated learning simulator",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config path (defaults built in)")
        p.add_argument("--out", help="output directory (or $UAVFEDSIM_OUT, or '.')")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")

    p_run = sub.add_parser("run", help="run one mission")
    common(p_run)
    p_run.add_argument("--strategy", default="optimized", choices=mission.STRATEGIES)
    p_run.add_argument("--seed", type=int, help="run seed (default: config rng_seed)")
    p_run.add_argument(
        "--dump-plans", type=int, nargs="?", const=3, default=0, metavar="N",
        help="also write plan records for the first N rounds (default 3)",
    )
    p_run.set_defaults(func=cmd_run)

    p_mc = sub.add_parser("mc", help="Monte-Carlo sweep over seeds and strategies")
    common(p_mc)
    p_mc.add_argument(
        "--strategies", default=",".join(mission.STRATEGIES),
        help="comma-separated strategy names (default: all)",
    )
    p_mc.add_argument(
        "--seeds", required=True,
        help="seed N or inclusive range A..B",
    )
    p_mc.set_defaults(func=cmd_mc)

    p_fit = sub.add_parser("fit-per", help="fit the logistic link-failure model")
    common(p_fit)
    p_fit.add_argument(
        "--points", type=int, default=121,
        help="report grid resolution (default 121)",
    )
    p_fit.set_defaults(func=cmd_fit_per)

    p_dump = sub.add_parser("dump-plan", help="write per-round plan JSON")
    common(p_dump)
    p_dump.add_argument("--strategy", default="optimized", choices=mission.STRATEGIES)
    p_dump.add_argument("--seed", type=int, help="run seed (default: config rng_seed)")
    p_dump.add_argument(
        "--rounds", type=int, default=3,
        help="number of leading rounds to record (default 3)",
    )
    p_dump.set_defaults(func=cmd_dump_plan)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
