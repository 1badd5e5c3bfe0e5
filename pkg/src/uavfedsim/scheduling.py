"""Per-round device scheduling: reward matrix construction and an exact
solver for the relaxed scheduling problem.

The feasible set (each device served at most once per round, at most a
fixed number of devices per trajectory step, box-bounded variables) is a
transportation-type polytope, so the linear relaxation always has an
integral optimum. Expanding each step into its per-step service slots
turns the problem into a rectangular assignment, which is solved exactly.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .channel import LogisticPerFit, approx_per, elevation_angle

FEAS_TOL = 1e-9


def build_rewards(
    waypoints: np.ndarray,
    device_positions: np.ndarray,
    priorities: np.ndarray,
    fit: LogisticPerFit,
    altitude: float,
) -> np.ndarray:
    """Reward of serving each device at each waypoint.

    Entry [n, k] is the logistic success probability of device k's uplink
    from waypoint n times the device's scheduling priority.
    """
    waypoints = np.asarray(waypoints, dtype=float)
    device_positions = np.asarray(device_positions, dtype=float)
    priorities = np.asarray(priorities, dtype=float)
    theta = elevation_angle(waypoints[:, None, :], altitude, device_positions[None, :, :])
    return (1.0 - approx_per(theta, fit)) * priorities[None, :]


def solve_schedule(rewards: np.ndarray, max_served: int) -> tuple[np.ndarray, float]:
    """Maximize total reward subject to the service-capacity constraints.

    Returns a binary schedule matrix (steps x devices) and its objective
    value, which equals the optimum of the linear relaxation. Devices
    whose best reward is zero stay unscheduled.
    """
    rewards = np.asarray(rewards, dtype=float)
    if rewards.ndim != 2:
        raise ValueError("rewards must be a steps x devices matrix")
    if not np.all(np.isfinite(rewards)) or np.any(rewards < 0.0):
        raise ValueError("rewards must be finite and nonnegative")
    if max_served < 1:
        raise ValueError("max_served must be at least 1")
    num_steps, num_devices = rewards.shape
    schedule = np.zeros((num_steps, num_devices))
    if num_steps == 0 or num_devices == 0:
        return schedule, 0.0

    # One column per service slot: step n owns slots n*max_served..(n+1)*max_served-1.
    slot_matrix = np.repeat(rewards.T, max_served, axis=1)
    rows, cols = linear_sum_assignment(slot_matrix, maximize=True)
    value = 0.0
    for device, slot in zip(rows, cols):
        step = slot // max_served
        if slot_matrix[device, slot] > 0.0:
            schedule[step, device] = 1.0
            value += float(slot_matrix[device, slot])
    return schedule, value


def schedule_is_feasible(schedule: np.ndarray, max_served: int) -> bool:
    """Check box bounds and both capacity constraints."""
    schedule = np.asarray(schedule, dtype=float)
    if np.any(schedule < -FEAS_TOL) or np.any(schedule > 1.0 + FEAS_TOL):
        return False
    if np.any(schedule.sum(axis=0) > 1.0 + FEAS_TOL):
        return False
    if np.any(schedule.sum(axis=1) > max_served + FEAS_TOL):
        return False
    return True


def round_schedule(
    schedule: np.ndarray,
    max_served: int,
    rewards: np.ndarray | None = None,
) -> np.ndarray:
    """Binary view of a (possibly fractional) feasible schedule.

    Already-binary inputs pass through unchanged. A genuinely fractional
    schedule (a degenerate-tie vertex or an interior point from some other
    solver) is re-solved from its reward matrix; integrality of the
    constraint polytope guarantees the binary solution loses nothing.
    """
    schedule = np.asarray(schedule, dtype=float)
    if not schedule_is_feasible(schedule, max_served):
        raise ValueError("infeasible schedule")
    deviation = np.abs(schedule - np.round(schedule))
    if np.max(deviation, initial=0.0) <= FEAS_TOL:
        return np.round(schedule)
    if rewards is None:
        raise ValueError("fractional schedule needs the reward matrix to re-solve")
    binary, _ = solve_schedule(rewards, max_served)
    return binary
