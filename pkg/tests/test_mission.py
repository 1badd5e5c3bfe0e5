"""Mission-loop tests: budget accounting, determinism, strategy shapes,
metric schemas, and Monte-Carlo aggregation."""

import json

import numpy as np
import pytest

from uavfedsim.channel import PropagationParams, db_to_linear
from uavfedsim.mission import (
    CSV_HEADER,
    Mission,
    monte_carlo,
    run_mission,
    write_metrics_csv,
    write_summary_json,
)
from uavfedsim.world import ServiceConfig, TaskSpec

LIVE_PROP = PropagationParams(
    noise=db_to_linear(-125.0),
    beta_los=db_to_linear(-30.0),
    beta_nlos=db_to_linear(-40.0),
)

SMALL_TASK = TaskSpec(
    num_classes=4,
    feature_dim=4,
    samples_per_class=20,
    val_samples_per_class=5,
    labels_per_device=2,
)


def small_config(**overrides):
    base = dict(
        propagation=LIVE_PROP,
        tasks=(SMALL_TASK, SMALL_TASK),
        devices_per_community=(3, 3),
    )
    base.update(overrides)
    return ServiceConfig(**base)


# ---------------------------------------------------------------- budgets


def test_ideal_budget_gives_fifty_rounds():
    # 40 km total at 800 m per round funds exactly 50 rounds.
    cfg = small_config(total_budget=40_000.0, round_budget=800.0)
    log = run_mission(cfg, "ideal", 7)
    assert log.rounds == 50
    assert log.total_distance == pytest.approx(40_000.0)


def test_barycenter_budget_gives_four_hundred_rounds():
    cfg = small_config(total_budget=40_000.0, round_budget=800.0, hover_cost=100.0)
    log = run_mission(cfg, "barycenter", 7)
    assert log.rounds == 400
    assert log.total_distance == pytest.approx(40_000.0)


def test_partial_budget_stops_before_overdraft():
    # 2800 m funds three 800 m rounds; the fourth would overdraw.
    cfg = small_config(total_budget=2_800.0, round_budget=800.0)
    log = run_mission(cfg, "ideal", 3)
    assert log.rounds == 3
    assert log.total_distance == pytest.approx(2_400.0)


def test_optimized_budget_is_conserved():
    cfg = small_config(total_budget=4_000.0, round_budget=800.0)
    log = run_mission(cfg, "optimized", 5)
    assert log.total_distance <= cfg.total_budget + 1e-9
    # Worst-case funding: stopping implies one more full round may not fit.
    assert log.total_distance + cfg.round_budget > cfg.total_budget - 1e-9
    for row in log.rows:
        assert row["cum_distance"] <= cfg.total_budget + 1e-9


# ----------------------------------------------------------- participation


def test_ideal_strategy_serves_every_device_every_round():
    cfg = small_config(total_budget=2_400.0)
    log = run_mission(cfg, "ideal", 11)
    for row in log.rows:
        assert row["scheduled"] == 3
        assert row["succeeded"] == 3


def test_ideal_respects_step_capacity():
    cfg = small_config(total_budget=800.0, max_served_per_step=2)
    mission = Mission(cfg, "ideal", 1)
    outcome = mission.run_round()
    per_step = np.asarray(outcome.plan.schedule).sum(axis=1)
    assert per_step.max() <= cfg.max_served_per_step


def test_radio_strategies_never_exceed_scheduled():
    cfg = small_config(total_budget=4_000.0)
    log = run_mission(cfg, "rectangular", 2)
    for row in log.rows:
        assert 0 <= row["succeeded"] <= row["scheduled"] <= 3


# ------------------------------------------------------------ determinism


def test_rerun_is_byte_identical(tmp_path):
    cfg = small_config(total_budget=3_200.0)
    paths = []
    for i in range(2):
        log = run_mission(cfg, "optimized", 9)
        path = tmp_path / f"run{i}.csv"
        write_metrics_csv(log, path)
        paths.append(path.read_bytes())
    assert paths[0] == paths[1]


def test_seed_changes_the_outcome(tmp_path):
    cfg = small_config(total_budget=3_200.0)
    a = run_mission(cfg, "optimized", 1)
    b = run_mission(cfg, "optimized", 2)
    assert [r["mean_val_acc"] for r in a.rows] != [r["mean_val_acc"] for r in b.rows]


def test_placement_shared_across_strategies():
    cfg = small_config(total_budget=1_600.0)
    devices = {}
    for strat in ("optimized", "barycenter", "ideal"):
        mission = Mission(cfg, strat, 13)
        devices[strat] = np.stack([d.pos for d in mission.devices])
    assert np.array_equal(devices["optimized"], devices["barycenter"])
    assert np.array_equal(devices["optimized"], devices["ideal"])


# ------------------------------------------------------------- strategies


def test_barycenter_hovers_at_mean_device_position():
    cfg = small_config(total_budget=1_000.0, hover_cost=100.0)
    mission = Mission(cfg, "barycenter", 3)
    outcome = mission.run_round()
    mean_pos = np.stack([d.pos for d in mission.devices]).mean(axis=0)
    assert np.allclose(outcome.plan.waypoints, mean_pos)


def test_rectangular_waypoints_lie_on_patrol_rectangle():
    cfg = small_config(total_budget=3_200.0, rect_margin=100.0)
    mission = Mission(cfg, "rectangular", 3)
    for _ in range(4):
        outcome = mission.run_round()
        for x, y in outcome.plan.waypoints:
            assert 100.0 - 1e-9 <= x <= cfg.area_width - 100.0 + 1e-9
            assert 100.0 - 1e-9 <= y <= cfg.area_height - 100.0 + 1e-9
            on_vertical = min(abs(x - 100.0), abs(x - (cfg.area_width - 100.0)))
            on_horizontal = min(abs(y - 100.0), abs(y - (cfg.area_height - 100.0)))
            assert min(on_vertical, on_horizontal) < 1e-6


def test_optimized_round_length_within_budget():
    cfg = small_config(total_budget=2_400.0)
    mission = Mission(cfg, "optimized", 5)
    for _ in range(3):
        outcome = mission.run_round()
        steps = np.diff(outcome.plan.waypoints, axis=0)
        length = float(np.linalg.norm(steps, axis=1).sum())
        assert length <= cfg.round_budget + 1e-6
        assert outcome.distance == pytest.approx(length)


def test_rounds_start_where_previous_ended():
    cfg = small_config(total_budget=2_400.0)
    mission = Mission(cfg, "optimized", 5)
    first = mission.run_round()
    second = mission.run_round()
    assert np.allclose(second.plan.waypoints[0], first.plan.waypoints[-1])


# ---------------------------------------------------------------- metrics


def test_metrics_rows_schema():
    cfg = small_config(total_budget=2_400.0)
    log = run_mission(cfg, "ideal", 1)
    assert len(log.rows) == log.rounds * cfg.num_communities
    for row in log.rows:
        assert set(row) == {
            "round", "community", "mean_val_acc", "cov",
            "scheduled", "succeeded", "cum_distance",
        }
        assert 0.0 <= row["mean_val_acc"] <= 1.0
    rounds_seen = sorted({row["round"] for row in log.rows})
    assert rounds_seen == list(range(1, log.rounds + 1))


def test_dispersion_updates_only_on_cadence():
    cfg = small_config(total_budget=9_600.0, cov_period=4)
    log = run_mission(cfg, "ideal", 2)
    by_community = {0: {}, 1: {}}
    for row in log.rows:
        by_community[row["community"]][row["round"]] = row["cov"]
    for series in by_community.values():
        for rnd, value in series.items():
            if rnd % 4 != 0:
                anchor = 1.0 if rnd < 4 else series[(rnd // 4) * 4]
                assert value == anchor


def test_csv_format_and_reload(tmp_path):
    cfg = small_config(total_budget=1_600.0)
    log = run_mission(cfg, "optimized", 4)
    path = tmp_path / "metrics.csv"
    write_metrics_csv(log, path)
    lines = path.read_text().splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == 1 + len(log.rows)
    reparsed = [line.split(",") for line in lines[1:]]
    for fields, row in zip(reparsed, log.rows):
        assert int(fields[0]) == row["round"]
        assert int(fields[1]) == row["community"]
        assert float(fields[2]) == row["mean_val_acc"]
        assert float(fields[6]) == row["cum_distance"]


def test_summary_json_round_trip(tmp_path):
    cfg = small_config(total_budget=1_600.0)
    log = run_mission(cfg, "barycenter", 4)
    path = tmp_path / "summary.json"
    write_summary_json(log, path)
    summary = json.loads(path.read_text())
    assert summary["strategy"] == "barycenter"
    assert summary["seed"] == 4
    assert summary["rounds"] == log.rounds
    assert summary["final_accuracy"]["0"] == log.final_accuracy[0]
    assert summary["final_accuracy"]["1"] == log.final_accuracy[1]


def test_plan_records_dumped_on_request():
    cfg = small_config(total_budget=2_400.0)
    log = run_mission(cfg, "optimized", 6, dump_rounds=2)
    assert len(log.plan_records) == 2
    for record in log.plan_records:
        assert len(record["waypoints"]) == cfg.steps_per_round
        assert len(record["devices"]) == cfg.num_devices
        assert record["objective_trace"]
        json.dumps(record)  # must be JSON-serializable as-is
    assert log.plan_records[0]["round"] == 1
    assert log.plan_records[1]["round"] == 2


def test_unknown_strategy_is_rejected():
    cfg = small_config()
    with pytest.raises(ValueError, match="strategy"):
        Mission(cfg, "zigzag", 1)


# ------------------------------------------------------------ monte carlo


def test_monte_carlo_matches_independent_recomputation():
    cfg = small_config(total_budget=1_600.0)
    seeds = [1, 2, 3]
    summary, logs = monte_carlo(cfg, ["ideal", "barycenter"], seeds)
    assert summary["seeds"] == seeds
    for strategy in ("ideal", "barycenter"):
        runs = [log for log in logs if log.strategy == strategy]
        assert [log.seed for log in runs] == seeds
        for community in (0, 1):
            finals = np.array([log.final_accuracy[community] for log in runs])
            block = summary["strategies"][strategy]["per_community"][str(community)]
            assert block["final_mean"] == pytest.approx(finals.mean(), abs=1e-15)
            assert block["final_std"] == pytest.approx(finals.std(), abs=1e-15)
            curve = np.array([
                [r["mean_val_acc"] for r in log.rows if r["community"] == community]
                for log in runs
            ])
            assert block["round_mean"] == pytest.approx(curve.mean(axis=0))


def test_monte_carlo_single_seed_equals_run(tmp_path):
    cfg = small_config(total_budget=1_600.0)
    summary, logs = monte_carlo(cfg, ["ideal"], [5])
    solo = run_mission(cfg, "ideal", 5)
    block = summary["strategies"]["ideal"]["per_community"]["0"]
    assert block["final_mean"] == pytest.approx(solo.final_accuracy[0])
    assert block["final_std"] == 0.0
    assert logs[0].rows == solo.rows


def test_monte_carlo_requires_seeds():
    with pytest.raises(ValueError, match="seed"):
        monte_carlo(small_config(), ["ideal"], [])
