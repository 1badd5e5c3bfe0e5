"""Mission loop: communication rounds, uplink simulation, aggregation,
dispersion-metric cadence, travel-budget accounting, UAV control
strategies, metrics logging, and Monte-Carlo orchestration.

Strategies
----------
``optimized``    alternating schedule/trajectory optimization with
                 dispersion-aware device priorities.
``no_cov``       same optimizer, but priorities ignore the dispersion
                 statistic (data share only, plus the missed-round boost).
``barycenter``   static hover at the mean device position; scheduling is
                 still optimized for the hover geometry. Each round is
                 charged a fixed hover-equivalent distance.
``rectangular``  fixed patrol rectangle inset from the area edges; each
                 round flies one full-budget arc along the perimeter.
``ideal``        every device trains and uploads successfully every
                 round; no radio is simulated.

Determinism: every stochastic ingredient draws from its own named
substream of the run seed, so schedule changes never shift another
device's draws, and strategies sharing a seed see identical placements,
datasets, and initial models.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import channel, learning, scheduling, trajectory
from .world import DeviceState, ServiceConfig, config_to_dict, place_devices

STRATEGIES = ("optimized", "no_cov", "barycenter", "rectangular", "ideal")

CSV_HEADER = "round,community,mean_val_acc,cov,scheduled,succeeded,cum_distance"

# Substream labels appended to the run seed.
_STREAM_PLACEMENT = 1
_STREAM_DATA = 2
_STREAM_TRAIN = 3
_STREAM_UPLINK = 4


@dataclass
class RoundOutcome:
    """What happened in one communication round."""

    round_index: int
    plan: trajectory.RoundPlan
    scheduled: dict[int, int]  # device id -> step index
    succeeded: set[int]
    distance: float


@dataclass
class MetricsLog:
    """Per-round, per-community records plus run metadata."""

    strategy: str
    seed: int
    config_hash: str
    rows: list[dict] = field(default_factory=list)
    final_accuracy: dict[int, float] = field(default_factory=dict)
    rounds: int = 0
    total_distance: float = 0.0
    plan_records: list[dict] = field(default_factory=list)


def config_hash(cfg: ServiceConfig) -> str:
    """Stable short hash of the full configuration."""
    canonical = json.dumps(config_to_dict(cfg), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def _rectangle_corners(cfg: ServiceConfig) -> np.ndarray:
    m = cfg.rect_margin
    return np.array([
        [m, m],
        [cfg.area_width - m, m],
        [cfg.area_width - m, cfg.area_height - m],
        [m, cfg.area_height - m],
    ])


def _rect_point(corners: np.ndarray, arc: float) -> np.ndarray:
    """Point at arc length ``arc`` along the rectangle perimeter."""
    sides = np.roll(corners, -1, axis=0) - corners
    lengths = np.linalg.norm(sides, axis=1)
    perimeter = lengths.sum()
    arc = arc % perimeter
    for corner, side, length in zip(corners, sides, lengths):
        if arc <= length:
            return corner + side * (arc / length)
        arc -= length
    return corners[0].copy()


class Mission:
    """Mutable state of one simulated mission."""

    def __init__(self, cfg: ServiceConfig, strategy: str, seed: int):
        if strategy not in STRATEGIES:
            raise ValueError(
                f"unknown strategy {strategy!r}; choose from {', '.join(STRATEGIES)}"
            )
        self.cfg = cfg
        self.strategy = strategy
        self.seed = int(seed)
        self.devices: list[DeviceState] = place_devices(
            cfg, np.random.default_rng([self.seed, _STREAM_PLACEMENT])
        )
        self.communities = learning.make_synthetic_tasks(
            cfg, self.devices, np.random.default_rng([self.seed, _STREAM_DATA])
        )
        self.fit = channel.fit_logistic_per(
            cfg.propagation, cfg.uav_altitude,
            np.linspace(0.0, float(np.hypot(cfg.area_width, cfg.area_height)), 60),
        )
        self.uav_position = cfg.start_position.copy()
        self.rect_arc = 0.0  # patrol progress along the rectangle perimeter
        self.consumed = 0.0
        self.round_index = 0
        self.device_positions = np.stack([d.pos for d in self.devices])
        self.weights = {d.id: d.weight for d in self.devices}
        self.plans: list[dict] = []

    # ------------------------------------------------------------- planning

    def round_cost_ceiling(self) -> float:
        """Budget a round of this strategy may charge, known in advance."""
        if self.strategy == "barycenter":
            return self.cfg.hover_cost
        return self.cfg.round_budget

    def _priorities(self) -> np.ndarray:
        cov_by_community = {c.id: c.cov for c in self.communities}
        values = np.zeros(len(self.devices))
        for device in self.devices:
            cov = 1.0 if self.strategy == "no_cov" else cov_by_community[device.community]
            values[device.id] = learning.importance(
                device, cov, self.cfg.fairness_weight
            )
        return values

    def _plan_round(self) -> tuple[trajectory.RoundPlan, float]:
        """Produce this round's plan and the budget it charges."""
        cfg = self.cfg
        n = cfg.steps_per_round
        if self.strategy == "ideal":
            waypoints = np.tile(self.uav_position, (n, 1))
            schedule = np.zeros((n, len(self.devices)))
            for device in self.devices:  # chunked across steps, capacity permitting
                schedule[(device.id // cfg.max_served_per_step) % n, device.id] = 1.0
            plan = trajectory.RoundPlan(
                waypoints=waypoints, schedule=schedule, objective=0.0
            )
            return plan, cfg.round_budget
        if self.strategy == "barycenter":
            hover = self.device_positions.mean(axis=0)
            waypoints = np.tile(hover, (n, 1))
            rewards = scheduling.build_rewards(
                waypoints, self.device_positions, self._priorities(), self.fit,
                cfg.uav_altitude,
            )
            schedule, value = scheduling.solve_schedule(rewards, cfg.max_served_per_step)
            plan = trajectory.RoundPlan(
                waypoints=waypoints, schedule=schedule, objective=value
            )
            return plan, cfg.hover_cost
        if self.strategy == "rectangular":
            corners = _rectangle_corners(cfg)
            arcs = self.rect_arc + np.linspace(0.0, cfg.round_budget, n)
            waypoints = np.stack([_rect_point(corners, a) for a in arcs])
            self.rect_arc = (self.rect_arc + cfg.round_budget) % (
                2.0 * (cfg.area_width + cfg.area_height - 4.0 * cfg.rect_margin)
            )
            rewards = scheduling.build_rewards(
                waypoints, self.device_positions, self._priorities(), self.fit,
                cfg.uav_altitude,
            )
            schedule, value = scheduling.solve_schedule(rewards, cfg.max_served_per_step)
            plan = trajectory.RoundPlan(
                waypoints=waypoints, schedule=schedule, objective=value
            )
            return plan, cfg.round_budget
        # optimized / no_cov
        plan = trajectory.alternating_optimize(
            self.uav_position, self.device_positions, self._priorities(), self.fit,
            cfg.uav_altitude, cfg.round_budget, cfg.max_served_per_step, n,
            tol=cfg.solver.tol, max_outer=cfg.solver.max_outer,
            max_inner=cfg.solver.max_inner,
        )
        return plan, trajectory.path_length(plan.waypoints)

    # -------------------------------------------------------------- rounds

    def run_round(self) -> RoundOutcome:
        """Advance the mission by one communication round."""
        cfg = self.cfg
        self.round_index += 1
        plan, cost = self._plan_round()

        scheduled: dict[int, int] = {}
        steps, devices_in_schedule = np.nonzero(plan.schedule)
        for step, device_id in zip(steps, devices_in_schedule):
            scheduled[int(device_id)] = int(step)

        # Uplink outcomes; the ideal strategy skips the radio entirely.
        succeeded: set[int] = set()
        if self.strategy == "ideal":
            succeeded = set(scheduled)
        else:
            for device_id, step in sorted(scheduled.items()):
                rng = np.random.default_rng(
                    [self.seed, _STREAM_UPLINK, self.round_index, device_id]
                )
                outcome = channel.sample_uplink(
                    plan.waypoints[step], self.devices[device_id].pos,
                    cfg.propagation, cfg.uav_altitude, rng,
                )
                if outcome.success:
                    succeeded.add(device_id)

        # Local training on the broadcast model for devices whose upload
        # will arrive; reported accuracy is measured on the broadcast model.
        updates_by_community: dict[int, list[learning.LocalUpdate]] = {}
        reports_by_community: dict[int, dict[int, float]] = {}
        for community in self.communities:
            updates_by_community[community.id] = []
            reports_by_community[community.id] = {}
        for device_id in sorted(succeeded):
            device = self.devices[device_id]
            community = self.communities[device.community]
            task = community.task
            accuracy = learning.validation_accuracy(community.global_model, device.val_set)
            rng = np.random.default_rng(
                [self.seed, _STREAM_TRAIN, self.round_index, device_id]
            )
            new_params = learning.local_train_fedprox(
                community.global_model, community.global_model, device.train_set,
                task.prox_coeff, task.learning_rate, task.momentum,
                task.batch_size, task.local_epochs, rng,
            )
            updates_by_community[community.id].append(
                learning.LocalUpdate(device_id, new_params, accuracy)
            )
            reports_by_community[community.id][device_id] = accuracy
            device.reported_accuracy = accuracy

        for community in self.communities:
            updates = updates_by_community[community.id]
            if updates:
                community.global_model = learning.aggregate(
                    updates, [self.weights[u.device_id] for u in updates]
                )
            learning.record_round_accuracy(community, reports_by_community[community.id])
            if self.round_index % cfg.cov_period == 0:
                community.cov = learning.update_cov(
                    community, self.weights, cfg.cov_period
                )

        for device in self.devices:
            device.participated_last_round = device.id in succeeded

        self.uav_position = plan.waypoints[-1].copy()
        self.consumed += cost
        return RoundOutcome(
            round_index=self.round_index, plan=plan, scheduled=scheduled,
            succeeded=succeeded, distance=cost,
        )

    def community_mean_accuracy(self, community: learning.CommunityState) -> float:
        """Data-share-weighted mean validation accuracy of the current
        community model across member validation sets."""
        total = 0.0
        for member in community.members:
            device = self.devices[member]
            total += self.weights[member] * learning.validation_accuracy(
                community.global_model, device.val_set
            )
        return total


def run_mission(
    cfg: ServiceConfig,
    strategy: str,
    seed: int,
    dump_rounds: int = 0,
) -> MetricsLog:
    """Run rounds until the travel budget cannot fund another one.

    ``dump_rounds`` keeps JSON-serializable plan records for the first so
    many rounds (0 keeps none).
    """
    mission = Mission(cfg, strategy, seed)
    log = MetricsLog(strategy=strategy, seed=int(seed), config_hash=config_hash(cfg))
    while mission.consumed + mission.round_cost_ceiling() <= cfg.total_budget + 1e-9:
        outcome = mission.run_round()
        for community in mission.communities:
            members = set(community.members)
            log.rows.append({
                "round": outcome.round_index,
                "community": community.id,
                "mean_val_acc": mission.community_mean_accuracy(community),
                "cov": community.cov,
                "scheduled": sum(1 for d in outcome.scheduled if d in members),
                "succeeded": sum(1 for d in outcome.succeeded if d in members),
                "cum_distance": mission.consumed,
            })
        if outcome.round_index <= dump_rounds:
            mission.plans.append(_plan_record(mission, outcome))
    log.rounds = mission.round_index
    log.total_distance = mission.consumed
    for community in mission.communities:
        log.final_accuracy[community.id] = mission.community_mean_accuracy(community)
    log.plan_records = mission.plans
    return log


def _plan_record(mission: Mission, outcome: RoundOutcome) -> dict:
    return {
        "round": outcome.round_index,
        "strategy": mission.strategy,
        "seed": mission.seed,
        "objective": outcome.plan.objective,
        "objective_trace": list(outcome.plan.trace),
        "waypoints": [[float(x), float(y)] for x, y in outcome.plan.waypoints],
        "scheduled": [
            {"step": step, "device": device_id, "succeeded": device_id in outcome.succeeded}
            for device_id, step in sorted(outcome.scheduled.items())
        ],
        "devices": [
            {"id": d.id, "community": d.community,
             "x": float(d.pos[0]), "y": float(d.pos[1])}
            for d in mission.devices
        ],
    }


# ------------------------------------------------------------------- output


def write_metrics_csv(log: MetricsLog, path: str | Path) -> None:
    """Write the per-round records with a fixed header and '.' decimals."""
    lines = [CSV_HEADER]
    for row in log.rows:
        lines.append(
            f"{row['round']},{row['community']},{row['mean_val_acc']!r},"
            f"{row['cov']!r},{row['scheduled']},{row['succeeded']},"
            f"{row['cum_distance']!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n", newline="\n")


def write_summary_json(log: MetricsLog, path: str | Path) -> None:
    summary = {
        "strategy": log.strategy,
        "seed": log.seed,
        "config_hash": log.config_hash,
        "rounds": log.rounds,
        "total_distance": log.total_distance,
        "final_accuracy": {str(k): v for k, v in sorted(log.final_accuracy.items())},
    }
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def monte_carlo(
    cfg: ServiceConfig, strategies: list[str], seeds: list[int]
) -> tuple[dict, list[MetricsLog]]:
    """Run every strategy over every seed; device placement is re-drawn per
    seed but shared across strategies.

    Returns the aggregate summary plus all per-run logs. Per-round curves
    are aligned on the common round prefix across seeds.
    """
    if not seeds:
        raise ValueError("need at least one seed")
    logs = [
        run_mission(cfg, strategy, seed)
        for strategy in strategies
        for seed in seeds
    ]
    summary: dict = {
        "config_hash": config_hash(cfg),
        "seeds": [int(s) for s in seeds],
        "strategies": {},
    }
    for strategy in strategies:
        runs = [log for log in logs if log.strategy == strategy]
        per_community: dict = {}
        for community in range(cfg.num_communities):
            finals = np.array([run.final_accuracy[community] for run in runs])
            curves = []
            for run in runs:
                curve = [r["mean_val_acc"] for r in run.rows if r["community"] == community]
                curves.append(curve)
            common = min(len(c) for c in curves)
            stacked = np.array([c[:common] for c in curves])
            per_community[str(community)] = {
                "final_mean": float(finals.mean()),
                "final_std": float(finals.std()),
                "round_mean": [float(v) for v in stacked.mean(axis=0)],
                "round_std": [float(v) for v in stacked.std(axis=0)],
            }
        summary["strategies"][strategy] = {
            "per_community": per_community,
            "mean_final_over_communities": float(np.mean([
                np.mean([run.final_accuracy[c] for run in runs])
                for c in range(cfg.num_communities)
            ])),
            "rounds": [run.rounds for run in runs],
        }
    return summary, logs
