"""Acceptance checks against the committed sample run directory.

These regenerate both figure kinds purely from the files in
``sample_run/`` (no simulator involvement) and verify that the numbers
drawn equal an independent recomputation from the same CSVs within
1e-12.
"""

import csv
from pathlib import Path

import numpy as np
import pytest

from uavfedsim_plots.figures import (
    ACCURACY_CURVES,
    TRAJECTORY_SNAPSHOT,
    PlotJob,
    plot_accuracy,
    plot_trajectory,
)

SAMPLE_RUN = Path(__file__).resolve().parents[2] / "sample_run"

STRATEGIES = ("optimized", "no_cov", "barycenter", "rectangular", "ideal")
SEEDS = (1, 2, 3)


def independent_curves(strategy, community):
    """Re-read the sample CSVs with the stdlib csv module (not the package
    parser) and stack the accuracy curves across seeds."""
    curves = []
    for seed in SEEDS:
        path = SAMPLE_RUN / f"metrics_{strategy}_{seed}.csv"
        with path.open(newline="") as handle:
            reader = csv.DictReader(handle)
            curve = [
                float(row["mean_val_acc"])
                for row in reader
                if int(row["community"]) == community
            ]
        curves.append(curve)
    common = min(len(c) for c in curves)
    return np.array([c[:common] for c in curves])


def test_sample_run_is_committed():
    assert SAMPLE_RUN.is_dir(), f"missing sample run directory {SAMPLE_RUN}"
    for strategy in STRATEGIES:
        for seed in SEEDS:
            assert (SAMPLE_RUN / f"metrics_{strategy}_{seed}.csv").exists()
    assert (SAMPLE_RUN / "plans_optimized_1.json").exists()
    assert (SAMPLE_RUN / "plans_rectangular_1.json").exists()


def test_accuracy_figures_regenerate_and_match_recomputation(tmp_path):
    job = PlotJob(inputs=(str(SAMPLE_RUN),), out_dir=tmp_path,
                  kind=ACCURACY_CURVES)
    result = plot_accuracy(job)
    assert sorted(result) == [0, 1]
    worst = 0.0
    for community in (0, 1):
        record = result[community]
        assert record["path"].exists() and record["path"].stat().st_size > 0
        assert sorted(record["series"]) == sorted(STRATEGIES)
        for strategy in STRATEGIES:
            series = record["series"][strategy]
            stacked = independent_curves(strategy, community)
            assert series["num_seeds"] == len(SEEDS)
            assert series["band"] is True
            gap_mean = float(np.max(np.abs(series["mean"] - stacked.mean(axis=0))))
            gap_std = float(np.max(np.abs(series["std"] - stacked.std(axis=0))))
            worst = max(worst, gap_mean, gap_std)
            assert gap_mean <= 1e-12
            assert gap_std <= 1e-12
    print(f"PASS: regenerated accuracy figures match independent CSV "
          f"recomputation (worst gap {worst:.2e})")


def test_trajectory_snapshots_regenerate_with_continuity(tmp_path):
    job = PlotJob(inputs=(str(SAMPLE_RUN),), out_dir=tmp_path,
                  kind=TRAJECTORY_SNAPSHOT)
    records = plot_trajectory(job)
    by_strategy = {record["strategy"]: record for record in records}
    assert set(by_strategy) == {"optimized", "rectangular"}
    for record in records:
        assert record["path"].exists() and record["path"].stat().st_size > 0
        assert record["rounds"] == [1, 2, 3]
        assert record["continuous"] is True
        assert record["contacts"], "no scheduled contacts in sample plans"
    print("PASS: regenerated trajectory snapshots for 3 continuous rounds")


def test_sample_rectangular_polyline_lies_on_patrol_rectangle(tmp_path):
    # The sample experiment uses an 800 x 800 m area with a 100 m margin.
    job = PlotJob(inputs=(str(SAMPLE_RUN / "plans_rectangular_1.json"),),
                  out_dir=tmp_path, kind=TRAJECTORY_SNAPSHOT)
    record = plot_trajectory(job)[0]
    low, high = 100.0, 700.0
    for x, y in record["polyline"]:
        assert low - 1e-6 <= x <= high + 1e-6
        assert low - 1e-6 <= y <= high + 1e-6
        edge_gap = min(abs(x - low), abs(x - high), abs(y - low), abs(y - high))
        assert edge_gap <= 1e-6, f"point ({x}, {y}) off the rectangle"
    print("PASS: rectangular sample polyline lies on the patrol rectangle")
