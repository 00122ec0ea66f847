"""Shared test utilities: finite-difference gradient checking and small
synthetic dataset builders."""
from __future__ import annotations

import numpy as np

from imbench.nn import DropoutLayer, MlpModel, cross_entropy, softmax


def _freeze_dropout(model: MlpModel, seed: int) -> None:
    """Give every dropout layer its own deterministic generator so repeated
    forwards, even ones restarted mid-network, draw identical masks."""
    model.rng = np.random.default_rng(seed)
    for i, layer in enumerate(model.layers):
        if isinstance(layer, DropoutLayer):
            layer.rng = np.random.default_rng((seed, i))


def mean_ce_loss(model: MlpModel, x: np.ndarray, y: np.ndarray, mask_seed: int) -> float:
    _freeze_dropout(model, mask_seed)
    return float(cross_entropy(model.forward(x), y).mean())


def fd_gradient_check(
    model: MlpModel,
    x: np.ndarray,
    y: np.ndarray,
    step: float = 1e-4,
    rel_tol: float = 1e-3,
    mask_seed: int = 1234,
    kink_rescue_step: float | None = None,
):
    """Central finite differences vs analytic backprop on every parameter.

    Returns (checked, failures, max_rel_err). Relative error uses
    |a - b| / max(|a|, |b|, 1e-5) so near-zero gradients compare absolutely.
    A parameter in layer j leaves layers before j untouched, so each probe
    replays the forward pass from layer j on its cached input; frozen
    per-layer dropout generators keep the masks identical across probes.

    A probe that straddles a ReLU kink makes the finite difference itself
    inaccurate even when the analytic gradient is right. When
    kink_rescue_step is given (one step or a sequence to try in turn), every
    failing coordinate is re-probed at those smaller steps and the count of
    coordinates that agree at any of them is returned as a fourth element
    (checked, failures, max_rel_err, rescued).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    _freeze_dropout(model, mask_seed)
    logits = model.forward(x)
    probs = softmax(logits)
    d_logits = probs.copy()
    d_logits[np.arange(len(y)), y] -= 1.0
    d_logits /= len(y)
    model.backward(d_logits)
    grads = [g.copy() for g in model.gradients()]

    _freeze_dropout(model, mask_seed)
    layer_inputs = []
    out = x
    for layer in model.layers:
        layer_inputs.append(out)
        out = layer.forward(out)

    dropout_layers = [
        (i, layer, np.random.default_rng((mask_seed, i)).bit_generator.state)
        for i, layer in enumerate(model.layers)
        if isinstance(layer, DropoutLayer)
    ]

    def loss_from(start: int) -> float:
        for idx, layer, state in dropout_layers:
            if idx >= start:
                layer.rng.bit_generator.state = state
        value = layer_inputs[start]
        for layer in model.layers[start:]:
            value = layer.forward(value)
        return float(cross_entropy(value, y).mean())

    def probe(flat_p, i, layer_pos, h):
        orig = flat_p[i]
        flat_p[i] = orig + h
        up = loss_from(layer_pos)
        flat_p[i] = orig - h
        down = loss_from(layer_pos)
        flat_p[i] = orig
        return (up - down) / (2.0 * h)

    checked = 0
    failures = 0
    max_rel = 0.0
    failed_coords = []
    grad_index = 0
    for layer_pos, layer in enumerate(model.layers):
        for p in layer.parameters():
            flat_p = p.reshape(-1)
            flat_g = grads[grad_index].reshape(-1)
            grad_index += 1
            for i in range(flat_p.size):
                fd = probe(flat_p, i, layer_pos, step)
                rel = abs(flat_g[i] - fd) / max(abs(flat_g[i]), abs(fd), 1e-5)
                max_rel = max(max_rel, rel)
                checked += 1
                if rel >= rel_tol:
                    failures += 1
                    failed_coords.append((flat_p, i, layer_pos, flat_g[i]))
    if kink_rescue_step is None:
        return checked, failures, max_rel
    rescue_steps = (
        (kink_rescue_step,) if np.isscalar(kink_rescue_step) else tuple(kink_rescue_step)
    )
    rescued = 0
    for flat_p, i, layer_pos, analytic in failed_coords:
        for h in rescue_steps:
            fd = probe(flat_p, i, layer_pos, h)
            rel = abs(analytic - fd) / max(abs(analytic), abs(fd), 1e-5)
            if rel < rel_tol:
                rescued += 1
                break
    return checked, failures, max_rel, rescued


def gaussian_imbalanced(
    n_majority: int,
    n_minority: int,
    offset: float = 1.4,
    dim: int = 2,
    seed: int = 0,
):
    """Two overlapping spherical Gaussians; minority (label 1) shifted by
    `offset` along every axis."""
    rng = np.random.default_rng(seed)
    x = np.vstack(
        [
            rng.normal(0.0, 1.0, size=(n_majority, dim)),
            rng.normal(offset, 1.0, size=(n_minority, dim)),
        ]
    )
    y = np.concatenate([np.zeros(n_majority, dtype=int), np.ones(n_minority, dtype=int)])
    perm = rng.permutation(len(y))
    return x[perm], y[perm]


def write_csv(path, x: np.ndarray, y: np.ndarray, pos="pos", neg="neg") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        cols = ",".join(f"x{j}" for j in range(x.shape[1]))
        fh.write(f"{cols},label\n")
        for row, label in zip(x, y):
            vals = ",".join(repr(float(v)) for v in row)
            fh.write(f"{vals},{pos if label == 1 else neg}\n")
