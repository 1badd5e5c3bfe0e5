"""Figure generation for uavfedsim run artifacts.

Consumes the simulator's emitted files only — metrics CSVs and plan
JSONs — and renders per-community accuracy curves and trajectory
snapshots. Nothing here recomputes simulation quantities; logged values
are aggregated and drawn as-is.
"""

__version__ = "0.1.0"
