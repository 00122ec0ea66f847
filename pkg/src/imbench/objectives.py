"""Training objectives (ERM and group-DRO) and the early-stopping epoch loop.

The group-DRO objective minimizes the worst per-class risk: each class's
batch-mean loss gets an additive adjustment 1/sqrt(N_c) computed from stable
training-partition counts, and only the worst class's gradient is applied.
The adjustment is constant with respect to parameters, so it influences
which class is selected but never the backpropagated gradient itself.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import ClassCounts
from .nn import AdamState, MlpModel, adam_step, cross_entropy, softmax

OBJECTIVES = ("erm", "gdro")


@dataclass
class TrainConfig:
    objective: str = "erm"
    epochs: int = 200
    batch_size: int = 32
    learning_rate: float = 0.001
    patience: int = 10
    class_weights: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.class_weights is not None:
            if self.objective == "gdro":
                raise ValueError("class_weights apply to the erm objective only")
            self.class_weights = np.asarray(self.class_weights, dtype=float)
            if self.class_weights.shape != (2,) or np.any(self.class_weights <= 0):
                raise ValueError("class_weights must be two positive values")


@dataclass
class TrainReport:
    epochs_run: int
    train_losses: list[float]
    val_errors: list[float]
    stopped_early: bool
    best_epoch: int

    def __post_init__(self):
        if len(self.val_errors) != self.epochs_run:
            raise ValueError("one validation error per epoch run")


def erm_batch_loss(per_sample_losses: np.ndarray) -> float:
    """Batch training loss: the arithmetic mean of the per-sample losses."""
    per_sample_losses = np.asarray(per_sample_losses, dtype=float)
    if per_sample_losses.size == 0:
        raise ValueError("empty batch")
    return float(per_sample_losses.mean())


def gdro_adjusted_class_losses(
    per_sample_losses: np.ndarray,
    batch_labels: np.ndarray,
    counts_for_adjustment: ClassCounts,
):
    """Per-class adjusted risks and the worst class for a group-DRO step.

    For each class present in the batch, the adjusted loss is the class's
    batch-mean loss plus 1/sqrt(N_c), with N_c the stable training-partition
    count. Returns ({class: adjusted loss}, worst_class); the worst class is
    the argmax, ties broken toward the smaller-count class, then lower index.
    """
    per_sample_losses = np.asarray(per_sample_losses, dtype=float)
    batch_labels = np.asarray(batch_labels, dtype=int)
    if per_sample_losses.size == 0:
        raise ValueError("empty batch")
    if per_sample_losses.shape != batch_labels.shape:
        raise ValueError("losses and labels must align")
    adjusted: dict[int, float] = {}
    for c in (0, 1):
        mask = batch_labels == c
        if not np.any(mask):
            continue
        adjusted[c] = float(
            per_sample_losses[mask].mean() + 1.0 / np.sqrt(counts_for_adjustment.of(c))
        )
    worst = max(
        adjusted,
        key=lambda c: (adjusted[c], -counts_for_adjustment.of(c), -c),
    )
    return adjusted, worst


def _backprop_and_update(model: MlpModel, d_logits: np.ndarray, adam: AdamState) -> None:
    model.backward(d_logits)
    adam_step(model.parameters(), model.gradients(), adam)


def erm_step(
    model: MlpModel,
    batch: np.ndarray,
    labels: np.ndarray,
    adam: AdamState,
    weights: np.ndarray | None = None,
) -> float:
    """One (optionally class-weighted) mean-loss gradient step; returns the loss.

    The model's current mode is respected. d(mean_i w_i*ce_i)/d(logits_i) =
    (w_i/B) * (softmax_i - onehot_i).
    """
    labels = np.asarray(labels, dtype=int)
    logits = model.forward(batch)
    sample_weights = None if weights is None else np.asarray(weights, dtype=float)[labels]
    losses = cross_entropy(logits, labels, sample_weights=sample_weights)
    loss = erm_batch_loss(losses)
    probs = softmax(logits)
    d_logits = probs.copy()
    d_logits[np.arange(len(labels)), labels] -= 1.0
    if sample_weights is not None:
        d_logits *= sample_weights[:, None]
    d_logits /= len(labels)
    _backprop_and_update(model, d_logits, adam)
    return loss


def gdro_step(
    model: MlpModel,
    batch: np.ndarray,
    labels: np.ndarray,
    counts: ClassCounts,
    adam: AdamState,
) -> float:
    """One worst-class gradient step; returns the worst adjusted loss.

    A single forward pass covers the whole batch; the backpropagated gradient
    is that of the worst class's mean loss restricted to its own samples
    (zero elsewhere), since the group adjustment is a constant.
    """
    labels = np.asarray(labels, dtype=int)
    logits = model.forward(batch)
    losses = cross_entropy(logits, labels)
    adjusted, worst = gdro_adjusted_class_losses(losses, labels, counts)
    mask = labels == worst
    probs = softmax(logits)
    d_logits = probs - np.eye(2)[labels]
    d_logits[~mask] = 0.0
    d_logits /= int(mask.sum())
    _backprop_and_update(model, d_logits, adam)
    return adjusted[worst]


def _minibatches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffled index batches; a trailing 1-row batch merges into its neighbor."""
    order = rng.permutation(n)
    batches = [order[i : i + batch_size] for i in range(0, n, batch_size)]
    if len(batches) > 1 and len(batches[-1]) < 2:
        batches[-2] = np.concatenate([batches[-2], batches[-1]])
        batches.pop()
    return batches


def validation_error(model: MlpModel, features: np.ndarray, labels: np.ndarray) -> float:
    """1 - accuracy at probability threshold 0.5, evaluated in inference mode."""
    was_training = model.training
    model.eval_mode()
    preds = (model.predict_proba(features) >= 0.5).astype(int)
    if was_training:
        model.train_mode()
    return float(np.mean(preds != np.asarray(labels, dtype=int)))


def train(
    model: MlpModel,
    train_features: np.ndarray,
    train_labels: np.ndarray,
    val_features: np.ndarray,
    val_labels: np.ndarray,
    config: TrainConfig,
) -> TrainReport:
    """Epoch loop with patience-based early stopping on validation error.

    Each epoch consumes shuffled minibatches of config.batch_size rows and
    then scores the validation set in inference mode. Training stops once
    `patience` consecutive epochs bring no strict improvement over the best
    validation error, and the best epoch's full state is restored.
    """
    train_features = np.asarray(train_features, dtype=float)
    train_labels = np.asarray(train_labels, dtype=int)
    if len(val_labels) == 0:
        raise ValueError("validation set must be non-empty")
    counts = ClassCounts.from_labels(train_labels)
    if counts.n0 == 0 or counts.n1 == 0:
        raise ValueError("training data must contain both classes")

    rng = np.random.default_rng(config.seed)
    adam = AdamState(model.parameters(), learning_rate=config.learning_rate)
    n = len(train_labels)

    best_error = np.inf
    best_epoch = 0
    best_state = model.snapshot()
    no_improve = 0
    train_losses: list[float] = []
    val_errors: list[float] = []
    stopped_early = False

    for epoch in range(1, config.epochs + 1):
        model.train_mode()
        epoch_loss = 0.0
        seen = 0
        for batch_idx in _minibatches(n, config.batch_size, rng):
            xb, yb = train_features[batch_idx], train_labels[batch_idx]
            if config.objective == "gdro":
                loss = gdro_step(model, xb, yb, counts, adam)
            else:
                loss = erm_step(model, xb, yb, adam, weights=config.class_weights)
            epoch_loss += loss * len(batch_idx)
            seen += len(batch_idx)
        train_losses.append(epoch_loss / seen)

        err = validation_error(model, val_features, val_labels)
        val_errors.append(err)
        if err < best_error:
            best_error = err
            best_epoch = epoch
            best_state = model.snapshot()
            no_improve = 0
        else:
            no_improve += 1
            if no_improve >= config.patience:
                stopped_early = True
                break

    model.restore(best_state)
    model.eval_mode()
    return TrainReport(
        epochs_run=len(val_errors),
        train_losses=train_losses,
        val_errors=val_errors,
        stopped_early=stopped_early,
        best_epoch=best_epoch,
    )
