"""Federated learning core: synthetic classification tasks, proximal local
training, weighted aggregation, validation accuracy, and the accuracy
dispersion statistic used to prioritize lagging communities.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .world import DeviceState, ServiceConfig, TaskSpec

# Dispersion value reported when a community's mean accuracy is zero; keeps
# the prioritization signal finite while ranking such a community first.
COV_SENTINEL = 1e3


@dataclass(frozen=True)
class Dataset:
    """Feature matrix (rows are samples) with integer class labels."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self) -> None:
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ValueError("features must be a non-empty 2-D matrix")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("labels must align with feature rows")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ValueError("label values must lie in [0, num_classes)")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features must be finite")

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class ModelParams:
    """Flat parameter vector plus the layout it packs.

    ``layout`` is (feature_dim, hidden_units, num_classes); zero hidden
    units selects a linear softmax classifier, otherwise one tanh hidden
    layer feeds the softmax.
    """

    values: np.ndarray
    layout: tuple[int, int, int]

    def __post_init__(self) -> None:
        if self.values.shape != (param_count(self.layout),):
            raise ValueError("parameter vector does not match layout")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("parameters must be finite")


def param_count(layout: tuple[int, int, int]) -> int:
    dim, hidden, classes = layout
    if hidden == 0:
        return dim * classes + classes
    return dim * hidden + hidden + hidden * classes + classes


def _unpack(values: np.ndarray, layout: tuple[int, int, int]):
    dim, hidden, classes = layout
    if hidden == 0:
        split = dim * classes
        return values[:split].reshape(dim, classes), values[split:]
    n1 = dim * hidden
    w1 = values[:n1].reshape(dim, hidden)
    b1 = values[n1:n1 + hidden]
    n2 = n1 + hidden
    w2 = values[n2:n2 + hidden * classes].reshape(hidden, classes)
    b2 = values[n2 + hidden * classes:]
    return w1, b1, w2, b2


def init_model(task: TaskSpec, rng: np.random.Generator) -> ModelParams:
    """Deterministic starting parameters for a community task.

    The linear classifier starts at zero (uniform logits); the one-hidden-
    layer variant needs symmetry breaking and draws scaled normal weights.
    """
    layout = (task.feature_dim, task.hidden_units, task.num_classes)
    if task.hidden_units == 0:
        values = np.zeros(param_count(layout))
    else:
        dim, hidden, classes = layout
        w1 = rng.normal(0.0, 1.0 / np.sqrt(dim), size=dim * hidden)
        w2 = rng.normal(0.0, 1.0 / np.sqrt(hidden), size=hidden * classes)
        values = np.concatenate([w1, np.zeros(hidden), w2, np.zeros(classes)])
    return ModelParams(values=values, layout=layout)


def predict_logits(model: ModelParams, features: np.ndarray) -> np.ndarray:
    """Class scores for each feature row."""
    if model.layout[1] == 0:
        w, b = _unpack(model.values, model.layout)
        return features @ w + b
    w1, b1, w2, b2 = _unpack(model.values, model.layout)
    hidden = np.tanh(features @ w1 + b1)
    return hidden @ w2 + b2


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def loss_and_grad(
    model: ModelParams,
    features: np.ndarray,
    labels: np.ndarray,
    anchor: np.ndarray | None = None,
    prox_coeff: float = 0.0,
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy (plus proximal penalty) and its flat gradient.

    The proximal term is 0.5 * prox_coeff * ||values - anchor||^2, pulling
    the local model toward the community anchor during heterogeneous
    training.
    """
    n = features.shape[0]
    dim, hidden_units, classes = model.layout
    onehot = np.zeros((n, classes))
    onehot[np.arange(n), labels] = 1.0

    if hidden_units == 0:
        w, b = _unpack(model.values, model.layout)
        logits = features @ w + b
        probs = _softmax(logits)
        delta = (probs - onehot) / n
        grad = np.concatenate([(features.T @ delta).ravel(), delta.sum(axis=0)])
    else:
        w1, b1, w2, b2 = _unpack(model.values, model.layout)
        pre = features @ w1 + b1
        hidden = np.tanh(pre)
        logits = hidden @ w2 + b2
        probs = _softmax(logits)
        delta = (probs - onehot) / n
        dhidden = (delta @ w2.T) * (1.0 - hidden ** 2)
        grad = np.concatenate([
            (features.T @ dhidden).ravel(),
            dhidden.sum(axis=0),
            (hidden.T @ delta).ravel(),
            delta.sum(axis=0),
        ])

    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = float(-log_probs[np.arange(n), labels].mean())

    if prox_coeff > 0.0 and anchor is not None:
        diff = model.values - anchor
        loss += 0.5 * prox_coeff * float(diff @ diff)
        grad = grad + prox_coeff * diff
    return loss, grad


def local_train_fedprox(
    model: ModelParams,
    global_model: ModelParams,
    data: Dataset,
    prox_coeff: float,
    learning_rate: float,
    momentum: float,
    batch_size: int,
    epochs: int,
    rng: np.random.Generator,
) -> ModelParams:
    """Mini-batch SGD with momentum on the proximal local objective.

    Momentum follows the convention v <- momentum*v + g; p <- p - lr*v.
    The proximal anchor is the community global model. Raises RuntimeError
    if the loss turns non-finite (divergence diagnostic).
    """
    if model.layout != global_model.layout:
        raise ValueError("model and global layouts differ")
    values = model.values.copy()
    anchor = global_model.values
    velocity = np.zeros_like(values)
    n = len(data)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            batch = order[start:start + batch_size]
            current = ModelParams(values=values, layout=model.layout)
            loss, grad = loss_and_grad(
                current, data.features[batch], data.labels[batch], anchor, prox_coeff
            )
            if not np.isfinite(loss):
                raise RuntimeError("divergence: non-finite training loss")
            velocity = momentum * velocity + grad
            values = values - learning_rate * velocity
    return ModelParams(values=values, layout=model.layout)


@dataclass(frozen=True)
class LocalUpdate:
    """A device's uploaded round product: new parameters plus its reported
    validation accuracy on the broadcast model."""

    device_id: int
    params: ModelParams
    accuracy: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError("accuracy must lie in [0, 1]")


def aggregate(updates: list[LocalUpdate], weights: list[float]) -> ModelParams:
    """Weighted average of received parameter vectors.

    ``weights`` aligns with ``updates`` and is renormalized over the
    updates that actually arrived.
    """
    if not updates:
        raise ValueError("no updates to aggregate")
    if len(weights) != len(updates):
        raise ValueError("weights must align with updates")
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0.0) or w.sum() <= 0.0:
        raise ValueError("weights must be nonnegative with positive sum")
    w = w / w.sum()
    layout = updates[0].params.layout
    if any(u.params.layout != layout for u in updates):
        raise ValueError("mismatched parameter layouts")
    values = np.zeros_like(updates[0].params.values)
    for wi, update in zip(w, updates):
        values = values + wi * update.params.values
    return ModelParams(values=values, layout=layout)


def validation_accuracy(model: ModelParams, val: Dataset) -> float:
    """Fraction of validation rows whose argmax class score is the label."""
    predictions = np.argmax(predict_logits(model, val.features), axis=1)
    return float(np.mean(predictions == val.labels))


@dataclass
class CommunityState:
    """One community: membership, shared model, task, and accuracy history.

    ``acc_history`` keeps each member's last few effective accuracy
    reports (stale values repeat when no fresh report arrives); ``cov``
    is the current dispersion statistic, 1.0 until the first update.
    """

    id: int
    members: tuple[int, ...]
    task: TaskSpec
    global_model: ModelParams
    cov: float = 1.0
    acc_history: dict[int, deque] = field(default_factory=dict)


def record_round_accuracy(community: CommunityState, received: dict[int, float]) -> None:
    """Append this round's effective accuracy for every member.

    Members present in ``received`` append their fresh report; the rest
    repeat their last stored value, so the window mean treats missing
    rounds as unchanged.
    """
    for member in community.members:
        history = community.acc_history[member]
        if member in received:
            history.append(received[member])
        else:
            history.append(history[-1])


def update_cov(
    community: CommunityState, weights: dict[int, float], window: int
) -> float:
    """Dispersion of member accuracies: root sum of squared deviations from
    the weighted mean, divided by that mean.

    Each member's accuracy is the mean of its last ``window`` stored
    reports. A zero mean yields the large sentinel so a dead community is
    prioritized rather than dividing by zero.
    """
    member_acc = np.array([
        np.mean(list(community.acc_history[m])[-window:]) for m in community.members
    ])
    member_weights = np.array([weights[m] for m in community.members])
    mean_acc = float(member_weights @ member_acc)
    if mean_acc <= 0.0:
        return COV_SENTINEL
    deviations = member_acc - mean_acc
    return float(np.sqrt(np.sum(deviations ** 2)) / mean_acc)


def importance(device: DeviceState, cov: float, fairness_weight: float) -> float:
    """Scheduling priority of a device.

    Data share times community dispersion, boosted by ``fairness_weight``
    when the device missed the previous round (unscheduled or failed
    upload).
    """
    if fairness_weight <= 1.0:
        raise ValueError("fairness_weight must exceed 1")
    base = device.weight * cov
    if not device.participated_last_round:
        return base * fairness_weight
    return base


def chance_level(task: TaskSpec) -> float:
    return 1.0 / task.num_classes


def make_synthetic_tasks(
    cfg: ServiceConfig, devices: list[DeviceState], rng: np.random.Generator
) -> list[CommunityState]:
    """Generate per-community tasks and partition data onto devices.

    Class centers are Gaussian with spacing set by the task's
    ``class_separation``; unit-variance noise is added per sample. In the
    default skewed mode every device owns ``labels_per_device`` distinct
    labels, first covering all labels, then topping devices up at random;
    each label's sample pool is split equally among its owners. Device
    weights become their share of the community's training samples, and
    accuracy histories start at chance level.
    """
    communities: list[CommunityState] = []
    for community_id, task in enumerate(cfg.tasks):
        members = [d for d in devices if d.community == community_id]
        if not members:
            raise ValueError(f"community {community_id} has no devices")
        scale = task.class_separation / np.sqrt(2.0 * task.feature_dim)
        centers = rng.normal(0.0, 1.0, size=(task.num_classes, task.feature_dim)) * scale

        owners = _assign_label_owners(task, len(members), rng)

        train_parts: list[list[np.ndarray]] = [[] for _ in members]
        train_labels: list[list[np.ndarray]] = [[] for _ in members]
        val_parts: list[list[np.ndarray]] = [[] for _ in members]
        val_labels: list[list[np.ndarray]] = [[] for _ in members]
        for label in range(task.num_classes):
            holders = owners[label]
            pool = centers[label] + rng.normal(
                0.0, 1.0, size=(task.samples_per_class, task.feature_dim)
            )
            val_pool = centers[label] + rng.normal(
                0.0, 1.0, size=(task.val_samples_per_class, task.feature_dim)
            )
            for chunk, holder in zip(np.array_split(pool, len(holders)), holders):
                train_parts[holder].append(chunk)
                train_labels[holder].append(np.full(len(chunk), label, dtype=np.int64))
            for chunk, holder in zip(np.array_split(val_pool, len(holders)), holders):
                val_parts[holder].append(chunk)
                val_labels[holder].append(np.full(len(chunk), label, dtype=np.int64))

        sizes = []
        for i, device in enumerate(members):
            features = np.concatenate(train_parts[i])
            labels = np.concatenate(train_labels[i])
            device.train_set = Dataset(features, labels, task.num_classes)
            device.val_set = Dataset(
                np.concatenate(val_parts[i]), np.concatenate(val_labels[i]),
                task.num_classes,
            )
            sizes.append(len(features))
        total = float(sum(sizes))
        history: dict[int, deque] = {}
        for device, size in zip(members, sizes):
            device.weight = size / total
            device.reported_accuracy = chance_level(task)
            history[device.id] = deque(
                [chance_level(task)], maxlen=max(cfg.cov_period, 1)
            )

        communities.append(CommunityState(
            id=community_id,
            members=tuple(d.id for d in members),
            task=task,
            global_model=init_model(task, rng),
            cov=1.0,
            acc_history=history,
        ))
    return communities


def _assign_label_owners(
    task: TaskSpec, num_members: int, rng: np.random.Generator
) -> list[list[int]]:
    """Map each label to the member indices holding it.

    Skewed mode requires enough label slots to cover every class at least
    once; IID mode gives every member every label.
    """
    if task.iid:
        return [list(range(num_members)) for _ in range(task.num_classes)]
    slots = num_members * task.labels_per_device
    if slots < task.num_classes:
        raise ValueError(
            f"cannot cover {task.num_classes} labels with {num_members} devices "
            f"holding {task.labels_per_device} each"
        )
    held: list[set[int]] = [set() for _ in range(num_members)]
    order = rng.permutation(task.num_classes)
    member = 0
    for label in order:
        held[member % num_members].add(int(label))
        member += 1
    for i in range(num_members):
        while len(held[i]) < task.labels_per_device:
            candidates = np.array(sorted(set(range(task.num_classes)) - held[i]))
            held[i].add(int(rng.choice(candidates)))
    owners: list[list[int]] = [[] for _ in range(task.num_classes)]
    for i in range(num_members):
        for label in sorted(held[i]):
            owners[label].append(i)
    return owners
