"""Figure builders: accuracy curves and trajectory snapshots.

Both operate on a :class:`PlotJob` pointing at simulator artifacts and
write static PNG images. The returned structures expose exactly the
numbers that were drawn, so tests can compare them against independent
recomputations from the same files.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .artifacts import (
    SchemaError,
    aggregate_accuracy,
    load_metrics,
    load_plans,
)

ACCURACY_CURVES = "accuracy_curves"
TRAJECTORY_SNAPSHOT = "trajectory_snapshot"
_KINDS = (ACCURACY_CURVES, TRAJECTORY_SNAPSHOT)

# Stable line colors per strategy; unknown strategies cycle through grays.
_STRATEGY_COLORS = {
    "ideal": "tab:green",
    "optimized": "tab:blue",
    "no_cov": "tab:orange",
    "rectangular": "tab:purple",
    "barycenter": "tab:red",
}
_COMMUNITY_CMAP = plt.get_cmap("tab10")


@dataclass(frozen=True)
class PlotJob:
    """What to draw: input artifacts, output directory, figure kind."""

    inputs: tuple[str, ...]
    out_dir: Path
    kind: str
    round_window: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"kind must be one of {_KINDS}, got {self.kind!r}")
        if not self.inputs:
            raise ValueError("inputs must not be empty")
        if self.round_window is not None and self.round_window[0] > self.round_window[1]:
            raise ValueError("round_window must be (first, last) with first <= last")


def _color_for(strategy: str) -> str:
    return _STRATEGY_COLORS.get(strategy, "tab:gray")


def plot_accuracy(job: PlotJob) -> dict:
    """One figure per community: mean accuracy per round per strategy,
    shaded by +/-1 std across seeds when more than one seed is present.

    Returns ``{community: {"path": Path, "series": {strategy: {...}}}}``
    where each series carries the drawn rounds/mean/std/num_seeds and
    whether a band was drawn.
    """
    if job.kind != ACCURACY_CURVES:
        raise ValueError(f"plot_accuracy needs an {ACCURACY_CURVES!r} job")
    runs = load_metrics(job.inputs)
    aggregated = aggregate_accuracy(runs)
    job.out_dir.mkdir(parents=True, exist_ok=True)

    result: dict = {}
    for community, per_strategy in aggregated.items():
        fig, ax = plt.subplots(figsize=(6.4, 4.0))
        series_out = {}
        for strategy in sorted(per_strategy):
            series = per_strategy[strategy]
            color = _color_for(strategy)
            band = series["num_seeds"] > 1
            ax.plot(series["rounds"], series["mean"], label=strategy, color=color)
            if band:
                ax.fill_between(
                    series["rounds"],
                    series["mean"] - series["std"],
                    series["mean"] + series["std"],
                    color=color, alpha=0.2, linewidth=0,
                )
            series_out[strategy] = {
                "rounds": series["rounds"],
                "mean": series["mean"],
                "std": series["std"],
                "num_seeds": series["num_seeds"],
                "band": band,
            }
        ax.set_xlabel("communication round")
        ax.set_ylabel("mean validation accuracy")
        ax.set_title(f"community {community}")
        ax.legend()
        ax.grid(alpha=0.3)
        path = job.out_dir / f"accuracy_community_{community}.png"
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        result[community] = {"path": path, "series": series_out}
    return result


def _select_rounds(payload: dict, window: tuple[int, int] | None, path: str) -> list[dict]:
    plans = payload["plans"]
    if window is not None:
        first, last = window
        plans = [p for p in plans if first <= p["round"] <= last]
        if not plans:
            raise SchemaError(
                f"{path}: no plan records in round window {first}..{last}"
            )
    return sorted(plans, key=lambda p: p["round"])


def _concatenate_waypoints(plans: list[dict]) -> tuple[np.ndarray, bool]:
    """Chain per-round polylines, dropping exact junction duplicates.

    Also reports whether every round starts exactly where the previous
    one ended (the simulator's continuity contract).
    """
    points: list[list[float]] = list(plans[0]["waypoints"])
    continuous = True
    for plan in plans[1:]:
        waypoints = plan["waypoints"]
        if waypoints[0] == points[-1]:
            points.extend(waypoints[1:])
        else:
            continuous = False
            points.extend(waypoints)
    return np.array(points, dtype=float), continuous


def plot_trajectory(job: PlotJob) -> list[dict]:
    """One snapshot per plans file: device positions colored by community,
    the concatenated waypoint polyline, and scheduled-contact markers
    (filled when the upload succeeded, cross when it failed).

    Returns one record per figure with the drawn polyline, the contact
    list, and the continuity flag.
    """
    if job.kind != TRAJECTORY_SNAPSHOT:
        raise ValueError(f"plot_trajectory needs a {TRAJECTORY_SNAPSHOT!r} job")
    payloads = load_plans(job.inputs)
    job.out_dir.mkdir(parents=True, exist_ok=True)

    results = []
    for payload in payloads:
        name = f"{payload['strategy']}_{payload['seed']}"
        plans = _select_rounds(payload, job.round_window, name)
        polyline, continuous = _concatenate_waypoints(plans)

        fig, ax = plt.subplots(figsize=(6.0, 6.0))
        devices = plans[0]["devices"]
        for device in devices:
            ax.scatter(
                device["x"], device["y"], s=60, marker="^",
                color=_COMMUNITY_CMAP(device["community"] % 10),
                edgecolors="black", linewidths=0.5, zorder=3,
            )
            ax.annotate(str(device["id"]), (device["x"], device["y"]),
                        textcoords="offset points", xytext=(4, 4), fontsize=7)

        ax.plot(polyline[:, 0], polyline[:, 1], "-", color="0.3",
                linewidth=1.2, zorder=2)
        ax.scatter(*polyline[0], marker="s", s=70, color="black", zorder=4)

        contacts = []
        for plan in plans:
            waypoints = plan["waypoints"]
            for contact in plan["scheduled"]:
                x, y = waypoints[contact["step"]]
                contacts.append({
                    "round": plan["round"], "device": contact["device"],
                    "succeeded": contact["succeeded"], "x": x, "y": y,
                })
                marker = "o" if contact["succeeded"] else "x"
                ax.scatter(x, y, marker=marker, s=30,
                           color="tab:green" if contact["succeeded"] else "tab:red",
                           zorder=5)

        first, last = plans[0]["round"], plans[-1]["round"]
        ax.set_title(f"{payload['strategy']} seed {payload['seed']}, "
                     f"rounds {first}-{last}")
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        ax.set_aspect("equal")
        ax.grid(alpha=0.3)
        path = job.out_dir / f"trajectory_{name}_rounds_{first}_{last}.png"
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        results.append({
            "path": path,
            "strategy": payload["strategy"],
            "seed": payload["seed"],
            "rounds": [plan["round"] for plan in plans],
            "polyline": polyline,
            "continuous": continuous,
            "contacts": contacts,
        })
    return results
