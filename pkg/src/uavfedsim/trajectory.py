"""Per-round UAV path optimization.

A greedy budgeted walk over device-overhead points initializes the path;
an inner solver then alternates with the scheduler, improving waypoints by
successive convexification: the success-probability objective is locally
replaced by the chain of first-order expansions of its three curved
pieces (exponential in elevation angle, elevation angle in ground range,
ground range in position), each a tangent under-estimator of a convex
function. Because the chained relaxation is not globally one-sided, every
candidate step is re-checked against the exact objective and rejected if
it does not improve it, which makes the objective sequence monotone by
construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import LogisticPerFit, approx_per, elevation_angle
from .scheduling import build_rewards, solve_schedule

# Per-iteration cap on any single waypoint displacement (m); keeps the
# linearizations accurate.
TRUST_RADIUS = 50.0

# Ground ranges below this (m) use a zero pull direction: the position
# gradient of the range is undefined exactly overhead.
MIN_RANGE = 0.1

LENGTH_TOL = 1e-6


@dataclass(frozen=True)
class RoundPlan:
    """Waypoints plus the binary schedule they serve, with the achieved
    objective and its per-phase trace."""

    waypoints: np.ndarray
    schedule: np.ndarray
    objective: float
    trace: tuple[float, ...] = ()


def path_length(waypoints: np.ndarray) -> float:
    """Total polyline length of the waypoint sequence."""
    waypoints = np.asarray(waypoints, dtype=float)
    if len(waypoints) < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(waypoints, axis=0), axis=1).sum())


# ------------------------------------------------------------ linearizations


def linearized_exp(x: np.ndarray, x0: float) -> np.ndarray:
    """Tangent of exp at x0; never exceeds exp(x)."""
    return np.exp(x0) * (1.0 + np.asarray(x, dtype=float) - x0)


def linearized_atan_ratio(r: np.ndarray, r0: float, altitude: float) -> np.ndarray:
    """Tangent of arctan(altitude/r) at r0 (radians); a lower bound for
    r > 0 since the function is convex there."""
    r0 = max(r0, MIN_RANGE)
    value0 = np.arctan(altitude / r0)
    slope = -altitude / (r0 * r0 + altitude * altitude)
    return value0 + slope * (np.asarray(r, dtype=float) - r0)


def linearized_norm(point: np.ndarray, ref: np.ndarray, center: np.ndarray) -> float:
    """Tangent of ||point - center|| at ref; never exceeds the norm."""
    offset = np.asarray(ref, dtype=float) - np.asarray(center, dtype=float)
    base = float(np.linalg.norm(offset))
    if base < MIN_RANGE:
        return base
    direction = offset / base
    return base + float(direction @ (np.asarray(point, dtype=float) - ref))


# ------------------------------------------------------------------ objective


def evaluate_true_objective(
    waypoints: np.ndarray,
    schedule: np.ndarray,
    priorities: np.ndarray,
    device_positions: np.ndarray,
    fit: LogisticPerFit,
    altitude: float,
) -> float:
    """Exact scheduled success-probability mass of a candidate plan."""
    waypoints = np.asarray(waypoints, dtype=float)
    schedule = np.asarray(schedule, dtype=float)
    priorities = np.asarray(priorities, dtype=float)
    device_positions = np.asarray(device_positions, dtype=float)
    theta = elevation_angle(waypoints[:, None, :], altitude, device_positions[None, :, :])
    success = 1.0 - approx_per(theta, fit)
    return float(np.sum(schedule * success * priorities[None, :]))


# ----------------------------------------------------------- initialization


def resample_by_arclength(points: np.ndarray, count: int) -> np.ndarray:
    """Resample a polyline to ``count`` waypoints equally spaced in arc
    length; the first point is preserved exactly."""
    points = np.asarray(points, dtype=float)
    if count < 1:
        raise ValueError("count must be at least 1")
    if len(points) == 1:
        return np.tile(points[0], (count, 1))
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    total = seg.sum()
    if total == 0.0:
        return np.tile(points[0], (count, 1))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.linspace(0.0, total, count)
    xs = np.interp(targets, s, points[:, 0])
    ys = np.interp(targets, s, points[:, 1])
    out = np.stack([xs, ys], axis=1)
    out[0] = points[0]
    return out


def graph_init(
    start: np.ndarray,
    device_positions: np.ndarray,
    priorities: np.ndarray,
    fit: LogisticPerFit,
    altitude: float,
    budget: float,
    max_served: int,
    num_steps: int,
) -> np.ndarray:
    """Budgeted greedy walk over device-overhead points.

    From the current position, each unvisited overhead point within the
    remaining budget is scored by its marginal reward — the sum of the
    best ``max_served`` uplink values among devices not yet credited —
    divided by the leg length. The best ratio wins (ties: shorter leg,
    then lower index); credited devices are never counted again, honoring
    the serve-once rule. The walk stops when nothing reachable adds
    reward, and the path is resampled to ``num_steps`` waypoints.
    """
    start = np.asarray(start, dtype=float)
    device_positions = np.asarray(device_positions, dtype=float)
    priorities = np.asarray(priorities, dtype=float)
    num_devices = len(device_positions)
    path = [start.copy()]
    if num_devices == 0:
        return resample_by_arclength(np.array(path), num_steps)

    remaining = float(budget)
    current = start
    unvisited = list(range(num_devices))
    uncredited = np.ones(num_devices, dtype=bool)
    while unvisited:
        best = None  # (ratio, leg, index, credited devices)
        for node in unvisited:
            leg = float(np.linalg.norm(device_positions[node] - current))
            if leg > remaining + LENGTH_TOL:
                continue
            theta = elevation_angle(device_positions[node], altitude, device_positions)
            values = (1.0 - approx_per(theta, fit)) * priorities
            values = np.where(uncredited, values, 0.0)
            top = np.argsort(-values, kind="stable")[:max_served]
            top = [int(t) for t in top if values[t] > 0.0]
            marginal = float(sum(values[t] for t in top))
            if marginal <= 0.0:
                continue
            ratio = marginal / max(leg, MIN_RANGE)
            key = (-ratio, leg, node)
            if best is None or key < best[0]:
                best = (key, leg, node, top)
        if best is None:
            break
        _, leg, node, credited = best
        path.append(device_positions[node].copy())
        remaining -= leg
        current = device_positions[node]
        unvisited.remove(node)
        for device in credited:
            uncredited[device] = False
    return resample_by_arclength(np.array(path), num_steps)


# -------------------------------------------------------------------- solver


def project_segment_budget(displacements: np.ndarray, budget: float) -> np.ndarray:
    """Euclidean projection onto {d : sum of segment norms <= budget}.

    Block soft-thresholding: every segment norm shrinks by the same
    threshold, found in closed form on the sorted norms.
    """
    displacements = np.asarray(displacements, dtype=float)
    norms = np.linalg.norm(displacements, axis=1)
    total = norms.sum()
    if total <= budget + LENGTH_TOL:
        return displacements.copy()
    # Find tau with sum(max(norms - tau, 0)) = budget.
    sorted_norms = np.sort(norms)[::-1]
    cumulative = np.cumsum(sorted_norms)
    counts = np.arange(1, len(sorted_norms) + 1)
    candidates = (cumulative - budget) / counts
    mask = candidates <= sorted_norms
    tau = candidates[mask][-1] if np.any(mask) else candidates[-1]
    tau = max(float(tau), 0.0)
    new_norms = np.maximum(norms - tau, 0.0)
    scale = np.where(norms > 0.0, new_norms / np.maximum(norms, 1e-300), 0.0)
    return displacements * scale[:, None]


def _objective_gradient(
    waypoints: np.ndarray,
    schedule: np.ndarray,
    priorities: np.ndarray,
    device_positions: np.ndarray,
    fit: LogisticPerFit,
    altitude: float,
) -> np.ndarray:
    """Gradient of the objective with respect to each waypoint.

    Assembled from the derivative factors of the three linearized pieces
    evaluated at the current point (where each tangent touches its
    function, so this is also the exact gradient).
    """
    diff = waypoints[:, None, :] - device_positions[None, :, :]
    ranges = np.linalg.norm(diff, axis=-1)
    theta = np.degrees(np.arctan2(altitude, ranges))
    z = np.clip(fit.slope * theta + fit.offset, -500.0, 500.0)
    success = 1.0 / (1.0 + np.exp(-z))
    dsuccess_dz = success * (1.0 - success)
    dtheta_dr = np.degrees(-altitude / (ranges * ranges + altitude * altitude))
    dr_dv = diff / np.maximum(ranges, MIN_RANGE)[:, :, None]
    coeff = schedule * priorities[None, :] * dsuccess_dz * fit.slope * dtheta_dr
    return np.sum(coeff[:, :, None] * dr_dv, axis=1)


def sca_trajectory(
    schedule: np.ndarray,
    waypoints0: np.ndarray,
    priorities: np.ndarray,
    device_positions: np.ndarray,
    fit: LogisticPerFit,
    altitude: float,
    budget: float,
    start: np.ndarray,
    tol: float = 1e-6,
    max_iter: int = 30,
) -> np.ndarray:
    """Improve a feasible trajectory for a fixed schedule.

    Each iteration takes one ascent step along the linearized-model
    gradient in displacement space, capped by the trust radius, projects
    back onto the length budget, and keeps the candidate only if the exact
    objective does not decrease; otherwise the step shrinks. The result
    starts at ``start`` exactly, respects the budget, and its exact
    objective is never below the input's.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    waypoints0 = np.asarray(waypoints0, dtype=float)
    start = np.asarray(start, dtype=float)
    if not np.array_equal(waypoints0[0], start):
        raise ValueError("trajectory must begin at the round start position")
    if path_length(waypoints0) > budget + LENGTH_TOL:
        raise ValueError("input trajectory exceeds the length budget")
    schedule = np.asarray(schedule, dtype=float)
    priorities = np.asarray(priorities, dtype=float)
    device_positions = np.asarray(device_positions, dtype=float)
    if len(waypoints0) < 2:
        return waypoints0.copy()

    def objective(waypoints: np.ndarray) -> float:
        return evaluate_true_objective(
            waypoints, schedule, priorities, device_positions, fit, altitude
        )

    incumbent = waypoints0.copy()
    value = objective(incumbent)
    for _ in range(max_iter):
        grad_v = _objective_gradient(
            incumbent, schedule, priorities, device_positions, fit, altitude
        )
        # Displacement-space gradient: moving segment j moves every later
        # waypoint, so it accumulates the suffix of waypoint gradients.
        grad_d = np.cumsum(grad_v[::-1], axis=0)[::-1][1:]
        displacements = np.diff(incumbent, axis=0)
        move_scale = float(np.max(np.linalg.norm(np.cumsum(grad_d, axis=0), axis=1)))
        if move_scale <= 0.0:
            break
        step = TRUST_RADIUS / move_scale
        improved = False
        for _ in range(25):
            candidate_d = project_segment_budget(displacements + step * grad_d, budget)
            candidate = np.vstack([start, start + np.cumsum(candidate_d, axis=0)])
            candidate_value = objective(candidate)
            if candidate_value >= value - 1e-12:
                gain = candidate_value - value
                incumbent, value = candidate, candidate_value
                improved = gain >= tol
                break
            step *= 0.5
        if not improved:
            break
    return incumbent


def alternating_optimize(
    start: np.ndarray,
    device_positions: np.ndarray,
    priorities: np.ndarray,
    fit: LogisticPerFit,
    altitude: float,
    budget: float,
    max_served: int,
    num_steps: int,
    tol: float = 1e-6,
    max_outer: int = 10,
    max_inner: int = 30,
) -> RoundPlan:
    """Alternate exact scheduling and trajectory improvement.

    Starting from the greedy path, each outer iteration re-solves the
    schedule for the current waypoints (which cannot lower the objective,
    as the previous schedule stays feasible) and then improves the
    waypoints for that schedule. The exact objective after each phase is
    recorded in the plan's trace; the loop stops once an outer iteration
    gains less than ``tol``.

    Scheduling ties are nudged toward later steps by an infinitesimal
    reward bias (orders of magnitude below every tolerance): when all
    waypoints coincide the assignment would otherwise land on the pinned
    first waypoint, leaving the trajectory phase nothing to move.
    """
    start = np.asarray(start, dtype=float)
    device_positions = np.asarray(device_positions, dtype=float)
    priorities = np.asarray(priorities, dtype=float)
    num_devices = len(device_positions)
    waypoints = graph_init(
        start, device_positions, priorities, fit, altitude, budget, max_served, num_steps
    )
    schedule = np.zeros((num_steps, num_devices))
    trace: list[float] = []
    value = 0.0
    step_bias = np.arange(num_steps)[:, None] * 1e-12
    for _ in range(max_outer):
        rewards = build_rewards(waypoints, device_positions, priorities, fit, altitude)
        schedule, _ = solve_schedule(rewards * (1.0 + step_bias), max_served)
        value = evaluate_true_objective(
            waypoints, schedule, priorities, device_positions, fit, altitude
        )
        trace.append(value)
        waypoints = sca_trajectory(
            schedule, waypoints, priorities, device_positions, fit, altitude,
            budget, start, tol=tol, max_iter=max_inner,
        )
        value = evaluate_true_objective(
            waypoints, schedule, priorities, device_positions, fit, altitude
        )
        trace.append(value)
        if len(trace) >= 4 and value - trace[-3] < tol:
            break
    return RoundPlan(
        waypoints=waypoints, schedule=schedule, objective=value, trace=tuple(trace)
    )
