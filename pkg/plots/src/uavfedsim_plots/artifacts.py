"""Readers and validators for the simulator's file artifacts.

Two input kinds are understood, exactly as the simulator documents them:

- ``metrics_<strategy>_<seed>.csv`` with header
  ``round,community,mean_val_acc,cov,scheduled,succeeded,cum_distance``;
- ``plans_<strategy>_<seed>.json`` holding per-round waypoint polylines,
  schedules with success flags, and device positions.

Every validation failure raises :class:`SchemaError` naming the file and
the offending column or key.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CSV_COLUMNS = (
    "round", "community", "mean_val_acc", "cov",
    "scheduled", "succeeded", "cum_distance",
)
_COLUMN_PARSERS = (int, int, float, float, int, int, float)

_METRICS_NAME = re.compile(r"^metrics_(?P<strategy>.+)_(?P<seed>\d+)\.csv$")


class SchemaError(ValueError):
    """An artifact does not match the documented schema."""


@dataclass(frozen=True)
class MetricsRun:
    """One run's per-round records, as read from a metrics CSV."""

    strategy: str
    seed: int
    path: Path
    rows: tuple[dict, ...]

    @property
    def communities(self) -> tuple[int, ...]:
        return tuple(sorted({row["community"] for row in self.rows}))

    def accuracy_curve(self, community: int) -> np.ndarray:
        rows = [r for r in self.rows if r["community"] == community]
        rows.sort(key=lambda r: r["round"])
        return np.array([r["mean_val_acc"] for r in rows])


def parse_metrics_csv(path: str | Path) -> MetricsRun:
    """Read and validate one metrics CSV."""
    path = Path(path)
    match = _METRICS_NAME.match(path.name)
    if match is None:
        raise SchemaError(
            f"{path}: file name must look like metrics_<strategy>_<seed>.csv"
        )
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise SchemaError(f"{path}: {exc}") from exc
    if not lines:
        raise SchemaError(f"{path}: empty file")

    header = lines[0].split(",")
    for index, expected in enumerate(CSV_COLUMNS):
        found = header[index] if index < len(header) else "<missing>"
        if found != expected:
            raise SchemaError(
                f"{path}: header column {index + 1} should be {expected!r}, "
                f"found {found!r}"
            )
    if len(header) > len(CSV_COLUMNS):
        raise SchemaError(
            f"{path}: unexpected extra header column {header[len(CSV_COLUMNS)]!r}"
        )

    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split(",")
        if len(fields) != len(CSV_COLUMNS):
            raise SchemaError(
                f"{path}: line {lineno} has {len(fields)} fields, "
                f"expected {len(CSV_COLUMNS)}"
            )
        row = {}
        for name, parser, field in zip(CSV_COLUMNS, _COLUMN_PARSERS, fields):
            try:
                row[name] = parser(field)
            except ValueError as exc:
                raise SchemaError(
                    f"{path}: line {lineno}, column {name!r}: "
                    f"cannot parse {field!r}"
                ) from exc
        rows.append(row)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return MetricsRun(
        strategy=match["strategy"], seed=int(match["seed"]),
        path=path, rows=tuple(rows),
    )


def resolve_inputs(inputs, pattern: str) -> list[Path]:
    """Expand files, directories, and glob patterns into a sorted file list."""
    found: list[Path] = []
    for item in inputs:
        path = Path(item)
        if path.is_dir():
            found.extend(sorted(path.glob(pattern)))
        elif any(ch in str(item) for ch in "*?["):
            base = Path(".")
            found.extend(sorted(base.glob(str(item))))
        elif not path.exists():
            raise SchemaError(f"{path}: no such file or directory")
        else:
            found.append(path)
    if not found:
        raise SchemaError(f"no files matching {pattern!r} under {list(map(str, inputs))}")
    return found


def load_metrics(inputs) -> list[MetricsRun]:
    """Parse every metrics CSV reachable from ``inputs``."""
    return [parse_metrics_csv(p) for p in resolve_inputs(inputs, "metrics_*.csv")]


def aggregate_accuracy(runs: list[MetricsRun]) -> dict:
    """Per-community, per-strategy accuracy statistics across seeds.

    Curves of the same strategy are aligned on their common round prefix.
    Returns ``{community: {strategy: {"rounds", "mean", "std",
    "num_seeds"}}}`` built purely from logged values.
    """
    if not runs:
        raise SchemaError("no metrics runs to aggregate")
    communities = runs[0].communities
    for run in runs[1:]:
        if run.communities != communities:
            raise SchemaError(
                f"{run.path}: communities {run.communities} differ from "
                f"{runs[0].path}'s {communities}"
            )
    strategies = sorted({run.strategy for run in runs})
    result: dict = {}
    for community in communities:
        per_strategy = {}
        for strategy in strategies:
            curves = [
                run.accuracy_curve(community)
                for run in runs if run.strategy == strategy
            ]
            common = min(len(curve) for curve in curves)
            stacked = np.stack([curve[:common] for curve in curves])
            per_strategy[strategy] = {
                "rounds": np.arange(1, common + 1),
                "mean": stacked.mean(axis=0),
                "std": stacked.std(axis=0),
                "num_seeds": len(curves),
            }
        result[community] = per_strategy
    return result


# ------------------------------------------------------------------- plans


def _require(payload: dict, key: str, kind, where: str, path: Path):
    if key not in payload:
        raise SchemaError(f"{path}: {where} is missing key {key!r}")
    value = payload[key]
    if kind is float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise SchemaError(f"{path}: {where}.{key} must be a number")
        return float(value)
    if not isinstance(value, kind):
        raise SchemaError(
            f"{path}: {where}.{key} must be {kind.__name__}, "
            f"got {type(value).__name__}"
        )
    return value


def parse_plans_json(path: str | Path) -> dict:
    """Read and validate one plans JSON payload."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except OSError as exc:
        raise SchemaError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise SchemaError(f"{path}: root must be a JSON object")

    _require(payload, "strategy", str, "root", path)
    _require(payload, "seed", int, "root", path)
    plans = _require(payload, "plans", list, "root", path)
    if not plans:
        raise SchemaError(f"{path}: no plan records")

    for i, plan in enumerate(plans):
        where = f"plans[{i}]"
        if not isinstance(plan, dict):
            raise SchemaError(f"{path}: {where} must be an object")
        _require(plan, "round", int, where, path)
        waypoints = _require(plan, "waypoints", list, where, path)
        if not waypoints:
            raise SchemaError(f"{path}: {where}.waypoints is empty")
        for j, point in enumerate(waypoints):
            if (not isinstance(point, list) or len(point) != 2
                    or not all(isinstance(v, (int, float)) for v in point)):
                raise SchemaError(
                    f"{path}: {where}.waypoints[{j}] must be [x, y]"
                )
        contacts = _require(plan, "scheduled", list, where, path)
        for j, contact in enumerate(contacts):
            cwhere = f"{where}.scheduled[{j}]"
            if not isinstance(contact, dict):
                raise SchemaError(f"{path}: {cwhere} must be an object")
            step = _require(contact, "step", int, cwhere, path)
            _require(contact, "device", int, cwhere, path)
            _require(contact, "succeeded", bool, cwhere, path)
            if not 0 <= step < len(waypoints):
                raise SchemaError(
                    f"{path}: {cwhere}.step {step} outside the waypoint range"
                )
        devices = _require(plan, "devices", list, where, path)
        for j, device in enumerate(devices):
            dwhere = f"{where}.devices[{j}]"
            if not isinstance(device, dict):
                raise SchemaError(f"{path}: {dwhere} must be an object")
            _require(device, "id", int, dwhere, path)
            _require(device, "community", int, dwhere, path)
            _require(device, "x", float, dwhere, path)
            _require(device, "y", float, dwhere, path)
    return payload


def load_plans(inputs) -> list[dict]:
    """Parse every plans JSON reachable from ``inputs``."""
    return [parse_plans_json(p) for p in resolve_inputs(inputs, "plans_*.json")]
