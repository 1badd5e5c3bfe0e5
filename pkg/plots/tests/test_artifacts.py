"""Artifact parsing and aggregation tests against fabricated files."""

import json

import numpy as np
import pytest

from uavfedsim_plots.artifacts import (
    CSV_COLUMNS,
    SchemaError,
    aggregate_accuracy,
    load_metrics,
    parse_metrics_csv,
    parse_plans_json,
    resolve_inputs,
)

HEADER = ",".join(CSV_COLUMNS)


def write_metrics(path, rows):
    lines = [HEADER]
    for row in rows:
        lines.append(",".join(str(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def simple_rows(num_rounds, accuracy_fn, cum_step=800.0):
    rows = []
    for rnd in range(1, num_rounds + 1):
        for community in (0, 1):
            rows.append((
                rnd, community, accuracy_fn(rnd, community), 1.0,
                3, 2, rnd * cum_step,
            ))
    return rows


def test_parse_valid_csv(tmp_path):
    path = write_metrics(
        tmp_path / "metrics_optimized_7.csv",
        simple_rows(3, lambda r, c: 0.1 * r + 0.01 * c),
    )
    run = parse_metrics_csv(path)
    assert run.strategy == "optimized"
    assert run.seed == 7
    assert run.communities == (0, 1)
    assert len(run.rows) == 6
    np.testing.assert_allclose(run.accuracy_curve(1), [0.11, 0.21, 0.31])


def test_strategy_names_with_underscores(tmp_path):
    path = write_metrics(
        tmp_path / "metrics_no_cov_12.csv", simple_rows(1, lambda r, c: 0.5)
    )
    run = parse_metrics_csv(path)
    assert run.strategy == "no_cov"
    assert run.seed == 12


def test_header_mismatch_names_file_and_column(tmp_path):
    path = tmp_path / "metrics_ideal_1.csv"
    bad_header = HEADER.replace("mean_val_acc", "accuracy")
    path.write_text(bad_header + "\n1,0,0.5,1.0,3,2,800.0\n")
    with pytest.raises(SchemaError) as excinfo:
        parse_metrics_csv(path)
    message = str(excinfo.value)
    assert "metrics_ideal_1.csv" in message
    assert "mean_val_acc" in message


def test_bad_cell_names_line_and_column(tmp_path):
    path = tmp_path / "metrics_ideal_1.csv"
    path.write_text(HEADER + "\n1,0,not_a_number,1.0,3,2,800.0\n")
    with pytest.raises(SchemaError) as excinfo:
        parse_metrics_csv(path)
    message = str(excinfo.value)
    assert "line 2" in message
    assert "mean_val_acc" in message


def test_wrong_field_count_is_rejected(tmp_path):
    path = tmp_path / "metrics_ideal_1.csv"
    path.write_text(HEADER + "\n1,0,0.5\n")
    with pytest.raises(SchemaError, match="fields"):
        parse_metrics_csv(path)


def test_unrecognized_filename_is_rejected(tmp_path):
    path = write_metrics(tmp_path / "results.csv", simple_rows(1, lambda r, c: 0.5))
    with pytest.raises(SchemaError, match="metrics_<strategy>_<seed>"):
        parse_metrics_csv(path)


def test_empty_data_is_rejected(tmp_path):
    path = tmp_path / "metrics_ideal_1.csv"
    path.write_text(HEADER + "\n")
    with pytest.raises(SchemaError, match="no data rows"):
        parse_metrics_csv(path)


def test_resolve_inputs_directory_and_missing(tmp_path):
    write_metrics(tmp_path / "metrics_a_1.csv", simple_rows(1, lambda r, c: 0.5))
    write_metrics(tmp_path / "metrics_b_2.csv", simple_rows(1, lambda r, c: 0.5))
    found = resolve_inputs([tmp_path], "metrics_*.csv")
    assert [p.name for p in found] == ["metrics_a_1.csv", "metrics_b_2.csv"]
    with pytest.raises(SchemaError, match="no such file"):
        resolve_inputs([tmp_path / "missing_dir"], "metrics_*.csv")
    empty = tmp_path / "empty_subdir"
    empty.mkdir()
    with pytest.raises(SchemaError, match="no files"):
        resolve_inputs([empty], "metrics_*.csv")


def test_aggregate_matches_manual_recomputation(tmp_path):
    rng = np.random.default_rng(5)
    values = {}
    for strategy in ("optimized", "ideal"):
        for seed in (1, 2, 3):
            accs = rng.uniform(0.2, 0.9, size=(4, 2))
            values[strategy, seed] = accs
            rows = []
            for rnd in range(1, 5):
                for community in (0, 1):
                    rows.append((rnd, community, repr(float(accs[rnd - 1, community])),
                                 1.0, 3, 2, rnd * 800.0))
            write_metrics(tmp_path / f"metrics_{strategy}_{seed}.csv", rows)

    runs = load_metrics([tmp_path])
    aggregated = aggregate_accuracy(runs)
    for community in (0, 1):
        for strategy in ("optimized", "ideal"):
            stacked = np.stack([
                values[strategy, seed][:, community] for seed in (1, 2, 3)
            ])
            block = aggregated[community][strategy]
            np.testing.assert_allclose(block["mean"], stacked.mean(axis=0),
                                       rtol=0.0, atol=1e-15)
            np.testing.assert_allclose(block["std"], stacked.std(axis=0),
                                       rtol=0.0, atol=1e-15)
            assert block["num_seeds"] == 3


def test_aggregate_aligns_on_common_round_prefix(tmp_path):
    write_metrics(tmp_path / "metrics_ideal_1.csv",
                  simple_rows(5, lambda r, c: 0.1 * r))
    write_metrics(tmp_path / "metrics_ideal_2.csv",
                  simple_rows(3, lambda r, c: 0.2 * r))
    aggregated = aggregate_accuracy(load_metrics([tmp_path]))
    block = aggregated[0]["ideal"]
    assert len(block["mean"]) == 3
    np.testing.assert_allclose(block["mean"], [0.15, 0.3, 0.45])


def test_aggregate_rejects_mismatched_communities(tmp_path):
    write_metrics(tmp_path / "metrics_ideal_1.csv",
                  simple_rows(2, lambda r, c: 0.5))
    single = [(1, 0, 0.5, 1.0, 3, 2, 800.0)]
    write_metrics(tmp_path / "metrics_ideal_2.csv", single)
    with pytest.raises(SchemaError, match="communities"):
        aggregate_accuracy(load_metrics([tmp_path]))


# ------------------------------------------------------------------- plans


def make_plan(round_index, start, devices=None):
    waypoints = [[start[0] + 10.0 * i, start[1]] for i in range(4)]
    return {
        "round": round_index,
        "strategy": "optimized",
        "seed": 1,
        "objective": 1.0,
        "objective_trace": [0.5, 1.0],
        "waypoints": waypoints,
        "scheduled": [
            {"step": 1, "device": 0, "succeeded": True},
            {"step": 3, "device": 1, "succeeded": False},
        ],
        "devices": devices or [
            {"id": 0, "community": 0, "x": 100.0, "y": 200.0},
            {"id": 1, "community": 1, "x": 600.0, "y": 500.0},
        ],
    }


def write_plans(path, plans, strategy="optimized", seed=1):
    path.write_text(json.dumps({
        "strategy": strategy, "seed": seed, "config_hash": "abc123",
        "plans": plans,
    }))
    return path


def test_parse_valid_plans(tmp_path):
    path = write_plans(tmp_path / "plans_optimized_1.json",
                       [make_plan(1, (0.0, 0.0)), make_plan(2, (30.0, 0.0))])
    payload = parse_plans_json(path)
    assert payload["strategy"] == "optimized"
    assert len(payload["plans"]) == 2


def test_empty_plans_rejected(tmp_path):
    path = write_plans(tmp_path / "plans_optimized_1.json", [])
    with pytest.raises(SchemaError, match="no plan records"):
        parse_plans_json(path)


def test_missing_plan_key_named(tmp_path):
    plan = make_plan(1, (0.0, 0.0))
    del plan["waypoints"]
    path = write_plans(tmp_path / "plans_optimized_1.json", [plan])
    with pytest.raises(SchemaError) as excinfo:
        parse_plans_json(path)
    assert "waypoints" in str(excinfo.value)
    assert "plans[0]" in str(excinfo.value)


def test_bad_waypoint_shape_named(tmp_path):
    plan = make_plan(1, (0.0, 0.0))
    plan["waypoints"][2] = [1.0]
    path = write_plans(tmp_path / "plans_optimized_1.json", [plan])
    with pytest.raises(SchemaError, match=r"waypoints\[2\]"):
        parse_plans_json(path)


def test_contact_step_out_of_range_named(tmp_path):
    plan = make_plan(1, (0.0, 0.0))
    plan["scheduled"][0]["step"] = 99
    path = write_plans(tmp_path / "plans_optimized_1.json", [plan])
    with pytest.raises(SchemaError, match="outside the waypoint range"):
        parse_plans_json(path)


def test_invalid_json_named(tmp_path):
    path = tmp_path / "plans_optimized_1.json"
    path.write_text("{broken")
    with pytest.raises(SchemaError, match="not valid JSON"):
        parse_plans_json(path)
