"""Service-area geometry, experiment configuration, and device placement."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .channel import PropagationParams, db_to_linear

DEFAULT_STEPS_PER_ROUND = 20
DEFAULT_HOVER_COST = 100.0  # m of budget charged per static-hover round
DEFAULT_RECT_MARGIN = 100.0  # m between the patrol rectangle and the area edge


@dataclass(frozen=True)
class TaskSpec:
    """Definition of one community's synthetic classification task.

    ``class_separation`` scales the distance between Gaussian class centers
    and is the difficulty knob: smaller separation means more class overlap
    and a lower achievable accuracy. ``hidden_units=0`` selects a linear
    softmax classifier; a positive value inserts one tanh hidden layer.
    """

    num_classes: int = 10
    feature_dim: int = 8
    class_separation: float = 3.0
    samples_per_class: int = 120
    val_samples_per_class: int = 30
    labels_per_device: int = 2
    iid: bool = False
    hidden_units: int = 0
    prox_coeff: float = 0.1
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 16
    local_epochs: int = 1

    def __post_init__(self) -> None:
        if self.num_classes < 2:
            raise ValueError("num_classes must be at least 2")
        if self.labels_per_device < 1 or self.labels_per_device > self.num_classes:
            raise ValueError("labels_per_device must be in [1, num_classes]")
        for key in ("feature_dim", "samples_per_class", "val_samples_per_class",
                    "batch_size", "local_epochs"):
            if getattr(self, key) < 1:
                raise ValueError(f"{key} must be positive")
        if self.class_separation <= 0.0:
            raise ValueError("class_separation must be positive")
        if self.prox_coeff < 0.0:
            raise ValueError("prox_coeff must be nonnegative")
        if self.learning_rate < 0.0:
            raise ValueError("learning_rate must be nonnegative")
        if self.hidden_units < 0:
            raise ValueError("hidden_units must be nonnegative")


@dataclass(frozen=True)
class SolverOptions:
    """Tolerances and iteration caps for the per-round plan optimizer."""

    tol: float = 1e-6
    max_inner: int = 30
    max_outer: int = 10

    def __post_init__(self) -> None:
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")
        if self.max_inner < 1 or self.max_outer < 1:
            raise ValueError("iteration caps must be positive")


@dataclass(frozen=True)
class ServiceConfig:
    """Validated experiment configuration; all lengths in meters."""

    area_width: float = 800.0
    area_height: float = 800.0
    num_communities: int = 2
    devices_per_community: tuple[int, ...] = (6, 6)
    uav_altitude: float = 60.0
    uav_speed: float = 20.0  # m/s, recorded for reporting only
    total_budget: float = 40_000.0
    round_budget: float = 800.0
    steps_per_round: int = DEFAULT_STEPS_PER_ROUND
    max_served_per_step: int = 3
    snr_threshold: float = 10.0  # linear ratio
    cov_period: int = 4  # rounds between dispersion updates
    fairness_weight: float = 1.5  # priority multiplier after a missed round
    rng_seed: int = 1
    uav_start: tuple[float, float] | None = None  # None -> area center
    hover_cost: float = DEFAULT_HOVER_COST
    rect_margin: float = DEFAULT_RECT_MARGIN
    propagation: PropagationParams = field(default_factory=PropagationParams)
    tasks: tuple[TaskSpec, ...] = (TaskSpec(), TaskSpec())
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self) -> None:
        for key in ("area_width", "area_height", "uav_altitude", "uav_speed",
                    "total_budget", "round_budget", "hover_cost"):
            if getattr(self, key) <= 0.0:
                raise ValueError(f"{key} must be positive")
        if self.round_budget > self.total_budget:
            raise ValueError("round_budget must not exceed total_budget")
        if self.num_communities < 1:
            raise ValueError("num_communities must be at least 1")
        if len(self.devices_per_community) != self.num_communities:
            raise ValueError(
                "devices_per_community length must equal num_communities"
            )
        if any(n < 1 for n in self.devices_per_community):
            raise ValueError("devices_per_community entries must be positive")
        if self.steps_per_round < 1:
            raise ValueError("steps_per_round must be at least 1")
        if self.max_served_per_step < 1:
            raise ValueError("max_served_per_step must be at least 1")
        if self.snr_threshold <= 0.0:
            raise ValueError("snr_threshold must be positive")
        if self.cov_period < 1:
            raise ValueError("cov_period must be at least 1")
        if self.fairness_weight <= 1.0:
            raise ValueError("fairness_weight must exceed 1")
        if len(self.tasks) != self.num_communities:
            raise ValueError("tasks length must equal num_communities")
        if self.rect_margin < 0.0 or 2.0 * self.rect_margin >= min(
            self.area_width, self.area_height
        ):
            raise ValueError("rect_margin must fit inside the service area")

    @property
    def start_position(self) -> np.ndarray:
        if self.uav_start is None:
            return np.array([self.area_width / 2.0, self.area_height / 2.0])
        return np.asarray(self.uav_start, dtype=float)

    @property
    def num_devices(self) -> int:
        return int(sum(self.devices_per_community))


@dataclass
class DeviceState:
    """A ground device: identity, location, data, and participation state.

    ``weight`` is the device's share of its community's training data.
    ``reported_accuracy`` is the latest validation accuracy that reached
    the UAV (chance level until a first report arrives), and
    ``participated_last_round`` records whether the device was scheduled
    and its upload succeeded in the previous round.
    """

    id: int
    community: int
    pos: np.ndarray
    train_set: object | None = None
    val_set: object | None = None
    weight: float = 0.0
    reported_accuracy: float = 0.0
    participated_last_round: bool = True


_PROPAGATION_DB_KEYS = {
    "beta_los_db": "beta_los",
    "beta_nlos_db": "beta_nlos",
    "tx_power_db": "tx_power",
    "noise_db": "noise",
}
_PROPAGATION_PLAIN_KEYS = (
    "beta_los", "beta_nlos", "alpha_los", "alpha_nlos",
    "sigma_los", "sigma_nlos", "a1", "a2", "tx_power", "noise",
)


def _build_propagation(raw: dict, snr_threshold: float) -> PropagationParams:
    if not isinstance(raw, dict):
        raise ValueError("propagation: expected an object")
    kwargs: dict = {"snr_threshold": snr_threshold}
    for key, value in raw.items():
        if key in _PROPAGATION_DB_KEYS:
            kwargs[_PROPAGATION_DB_KEYS[key]] = db_to_linear(float(value))
        elif key in _PROPAGATION_PLAIN_KEYS:
            kwargs[key] = float(value)
        else:
            raise ValueError(f"propagation.{key}: unknown key")
    try:
        return PropagationParams(**kwargs)
    except ValueError as exc:
        raise ValueError(f"propagation: {exc}") from exc


def _build_tasks(raw: list, num_communities: int) -> tuple[TaskSpec, ...]:
    if not isinstance(raw, list):
        raise ValueError("tasks: expected a list")
    known = set(TaskSpec.__dataclass_fields__)
    tasks = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise ValueError(f"tasks[{i}]: expected an object")
        unknown = set(entry) - known
        if unknown:
            raise ValueError(f"tasks[{i}].{sorted(unknown)[0]}: unknown key")
        try:
            tasks.append(TaskSpec(**entry))
        except (TypeError, ValueError) as exc:
            raise ValueError(f"tasks[{i}]: {exc}") from exc
    return tuple(tasks)


def load_config(path: str | Path) -> ServiceConfig:
    """Load and validate a JSON experiment configuration.

    Optional keys fall back to defaults; dB-valued radio fields (suffix
    ``_db``) are converted to linear units at this boundary. Errors name
    the offending key.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ValueError("config root must be a JSON object")
    return config_from_dict(raw)


_SCALAR_KEYS = {
    "area_width": float, "area_height": float, "num_communities": int,
    "uav_altitude": float, "uav_speed": float, "total_budget": float,
    "round_budget": float, "steps_per_round": int, "max_served_per_step": int,
    "snr_threshold": float, "cov_period": int, "fairness_weight": float,
    "rng_seed": int, "hover_cost": float, "rect_margin": float,
}


def config_from_dict(raw: dict) -> ServiceConfig:
    """Build a ServiceConfig from an already-parsed JSON object."""
    kwargs: dict = {}
    for key, value in raw.items():
        if key in _SCALAR_KEYS:
            try:
                kwargs[key] = _SCALAR_KEYS[key](value)
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{key}: expected {_SCALAR_KEYS[key].__name__}") from exc
        elif key == "devices_per_community":
            if isinstance(value, int):
                kwargs[key] = value  # expanded below once num_communities known
            elif isinstance(value, list) and all(isinstance(v, int) for v in value):
                kwargs[key] = tuple(value)
            else:
                raise ValueError("devices_per_community: expected int or list of ints")
        elif key == "uav_start":
            if value is None:
                continue  # null means "use the area center"
            if not (isinstance(value, list) and len(value) == 2):
                raise ValueError("uav_start: expected [x, y] or null")
            kwargs[key] = (float(value[0]), float(value[1]))
        elif key in ("propagation", "tasks", "solver"):
            kwargs[key] = value  # handled below
        else:
            raise ValueError(f"{key}: unknown key")

    num_communities = kwargs.get("num_communities", 2)
    per_comm = kwargs.get("devices_per_community", (6, 6))
    if isinstance(per_comm, int):
        kwargs["devices_per_community"] = (per_comm,) * num_communities

    snr_threshold = kwargs.get("snr_threshold", 10.0)
    kwargs["propagation"] = _build_propagation(raw.get("propagation", {}), snr_threshold)
    if "tasks" in raw:
        kwargs["tasks"] = _build_tasks(raw["tasks"], num_communities)
    else:
        kwargs["tasks"] = tuple(TaskSpec() for _ in range(num_communities))
    solver_raw = raw.get("solver", {})
    if not isinstance(solver_raw, dict):
        raise ValueError("solver: expected an object")
    try:
        kwargs["solver"] = SolverOptions(**solver_raw)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"solver: {exc}") from exc

    try:
        return ServiceConfig(**kwargs)
    except TypeError as exc:
        raise ValueError(str(exc)) from exc


def config_to_dict(cfg: ServiceConfig) -> dict:
    """Serialize a config back to plain JSON-compatible types."""
    prop = cfg.propagation
    return {
        "area_width": cfg.area_width,
        "area_height": cfg.area_height,
        "num_communities": cfg.num_communities,
        "devices_per_community": list(cfg.devices_per_community),
        "uav_altitude": cfg.uav_altitude,
        "uav_speed": cfg.uav_speed,
        "total_budget": cfg.total_budget,
        "round_budget": cfg.round_budget,
        "steps_per_round": cfg.steps_per_round,
        "max_served_per_step": cfg.max_served_per_step,
        "snr_threshold": cfg.snr_threshold,
        "cov_period": cfg.cov_period,
        "fairness_weight": cfg.fairness_weight,
        "rng_seed": cfg.rng_seed,
        "uav_start": None if cfg.uav_start is None else list(cfg.uav_start),
        "hover_cost": cfg.hover_cost,
        "rect_margin": cfg.rect_margin,
        "propagation": {
            "beta_los": prop.beta_los,
            "beta_nlos": prop.beta_nlos,
            "alpha_los": prop.alpha_los,
            "alpha_nlos": prop.alpha_nlos,
            "sigma_los": prop.sigma_los,
            "sigma_nlos": prop.sigma_nlos,
            "a1": prop.a1,
            "a2": prop.a2,
            "tx_power": prop.tx_power,
            "noise": prop.noise,
        },
        "tasks": [
            {name: getattr(task, name) for name in TaskSpec.__dataclass_fields__}
            for task in cfg.tasks
        ],
        "solver": {
            "tol": cfg.solver.tol,
            "max_inner": cfg.solver.max_inner,
            "max_outer": cfg.solver.max_outer,
        },
    }


def with_seed(cfg: ServiceConfig, seed: int) -> ServiceConfig:
    """Copy of the config with a different RNG seed."""
    return replace(cfg, rng_seed=int(seed))


def place_devices(cfg: ServiceConfig, rng: np.random.Generator) -> list[DeviceState]:
    """Place devices uniformly at random inside the service area.

    Devices are numbered 0..K-1 in community order; an identical generator
    state reproduces the placement exactly.
    """
    devices: list[DeviceState] = []
    next_id = 0
    for community, count in enumerate(cfg.devices_per_community):
        xs = rng.uniform(0.0, cfg.area_width, size=count)
        ys = rng.uniform(0.0, cfg.area_height, size=count)
        for x, y in zip(xs, ys):
            devices.append(DeviceState(id=next_id, community=community,
                                       pos=np.array([x, y])))
            next_id += 1
    return devices
