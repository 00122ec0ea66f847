"""Classical class-imbalance treatments: resampling and cost weighting.

Each resampling transform maps (features, labels, rng) to a new training
array pair; cost weighting leaves the data alone and produces per-class loss
weights. Transforms return copies and never mutate their inputs.
"""
from __future__ import annotations

import numpy as np

METHODS = ("erm", "gdro", "ros", "rus", "cost", "rusros")


def _split_by_class(labels: np.ndarray):
    labels = np.asarray(labels, dtype=int)
    idx_min = np.flatnonzero(labels == 1)
    idx_maj = np.flatnonzero(labels == 0)
    if len(idx_min) == 0 or len(idx_maj) == 0:
        raise ValueError("both classes must be present to rebalance")
    return idx_min, idx_maj


def _gather(features, labels, index_groups, rng):
    sel = np.concatenate(index_groups)
    sel = rng.permutation(sel)
    return np.asarray(features)[sel].copy(), np.asarray(labels)[sel].copy()


def random_oversample(features, labels, rng: np.random.Generator):
    """Resample the minority class with replacement up to the majority count."""
    idx_min, idx_maj = _split_by_class(labels)
    if len(idx_min) > len(idx_maj):
        idx_min, idx_maj = idx_maj, idx_min
    extra = rng.choice(idx_min, size=len(idx_maj) - len(idx_min), replace=True)
    return _gather(features, labels, [idx_maj, idx_min, extra], rng)


def random_undersample(features, labels, rng: np.random.Generator):
    """Subsample the majority class without replacement down to the minority count."""
    idx_min, idx_maj = _split_by_class(labels)
    if len(idx_min) > len(idx_maj):
        idx_min, idx_maj = idx_maj, idx_min
    keep = rng.choice(idx_maj, size=len(idx_min), replace=False)
    return _gather(features, labels, [keep, idx_min], rng)


def rus_ros_hybrid(features, labels, rng: np.random.Generator):
    """Meet in the middle: majority halved (ceil), minority resampled to match.

    The majority class is undersampled without replacement to ceil(n_maj / 2);
    the minority class is then brought to that same count, oversampling with
    replacement when below it and subsampling without replacement in the
    low-imbalance case where it already exceeds the halved majority.
    """
    idx_min, idx_maj = _split_by_class(labels)
    if len(idx_min) > len(idx_maj):
        idx_min, idx_maj = idx_maj, idx_min
    target = -(-len(idx_maj) // 2)
    keep_maj = rng.choice(idx_maj, size=target, replace=False)
    if len(idx_min) < target:
        extra = rng.choice(idx_min, size=target - len(idx_min), replace=True)
        groups = [keep_maj, idx_min, extra]
    elif len(idx_min) > target:
        groups = [keep_maj, rng.choice(idx_min, size=target, replace=False)]
    else:
        groups = [keep_maj, idx_min]
    return _gather(features, labels, groups, rng)


def cost_weights(labels, normalize: bool = True) -> np.ndarray:
    """Inverse-frequency class weights for reweighted cross entropy.

    Raw weights are 1 / n_c. With normalize=True (default) they are scaled to
    w_c = n / (2 * n_c), so the dataset-mean weight is 1 and the effective
    learning rate is unchanged relative to unweighted training.
    """
    labels = np.asarray(labels, dtype=int)
    n1 = int(np.sum(labels == 1))
    n0 = int(np.sum(labels == 0))
    if n0 == 0 or n1 == 0:
        raise ValueError("both classes must be present to compute cost weights")
    n = n0 + n1
    if normalize:
        return np.array([n / (2.0 * n0), n / (2.0 * n1)])
    return np.array([1.0 / n0, 1.0 / n1])


def apply_method(method: str, features, labels, rng: np.random.Generator):
    """Dispatch a method name to its training-set transform.

    Returns (features, labels, class_weights); weights are None except for
    "cost". "erm" and "gdro" pass the data through untouched (gdro handles
    imbalance inside its objective, not in the sampler).
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if method in ("erm", "gdro"):
        return np.asarray(features).copy(), np.asarray(labels).copy(), None
    if method == "ros":
        f, y = random_oversample(features, labels, rng)
        return f, y, None
    if method == "rus":
        f, y = random_undersample(features, labels, rng)
        return f, y, None
    if method == "rusros":
        f, y = rus_ros_hybrid(features, labels, rng)
        return f, y, None
    f = np.asarray(features).copy()
    y = np.asarray(labels).copy()
    return f, y, cost_weights(y)
