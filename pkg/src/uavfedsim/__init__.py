"""Deterministic simulator of a UAV orchestrating federated learning.

A single UAV flies bounded per-round trajectories over a service area,
schedules uplink slots for ground devices grouped into communities, and
aggregates their local model updates. Radio links follow an air-to-ground
model with line-of-sight mixing and lognormal shadowing; device selection
balances progress across community tasks through a dispersion statistic of
reported validation accuracies.
"""

__version__ = "0.1.0"
