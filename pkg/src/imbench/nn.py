"""Minimal dense network engine: layers, hand-derived backprop, loss, Adam.

Everything operates on 2-D float64 arrays (rows = samples). The block
structure is fixed (dense -> relu -> batch norm -> dropout, repeated), so
gradients are derived analytically per layer instead of via a general
autodiff graph.
"""
from __future__ import annotations

import numpy as np


def xavier_init(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    """Glorot-uniform weights: i.i.d. U[-L, L] with L = sqrt(6/(fan_in+fan_out))."""
    if fan_in < 1 or fan_out < 1:
        raise ValueError(f"fan dimensions must be >= 1, got ({fan_in}, {fan_out})")
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with the max subtracted before exponentiating."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy(
    logits: np.ndarray,
    labels: np.ndarray,
    sample_weights: np.ndarray | None = None,
) -> np.ndarray:
    """Per-sample (optionally weighted) softmax cross-entropy losses.

    Uses log-sum-exp stabilization so arbitrarily confident logits stay finite.
    """
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels)
    if logits.ndim != 2:
        raise ValueError("logits must be 2-D")
    if logits.shape[0] != labels.shape[0]:
        raise ValueError("logits rows must equal label count")
    if labels.size and np.any((labels != 0) & (labels != 1)):
        raise ValueError("labels must be 0 or 1")
    losses = -log_softmax(logits)[np.arange(len(labels)), labels]
    if sample_weights is not None:
        w = np.asarray(sample_weights, dtype=float)
        if w.shape != losses.shape:
            raise ValueError("sample_weights length must match labels")
        if np.any(w <= 0):
            raise ValueError("sample_weights must be positive")
        losses = w * losses
    return losses


class DenseLayer:
    """Affine layer y = xW + b with Xavier-uniform W and zero bias."""

    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator):
        self.weights = xavier_init(fan_in, fan_out, rng)
        self.bias = np.zeros(fan_out)
        self.weight_grad = np.zeros_like(self.weights)
        self.bias_grad = np.zeros_like(self.bias)
        self.training = True
        self._x = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return x @ self.weights + self.bias

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        self.weight_grad = self._x.T @ grad_out
        self.bias_grad = grad_out.sum(axis=0)
        return grad_out @ self.weights.T

    def parameters(self):
        return [self.weights, self.bias]

    def gradients(self):
        return [self.weight_grad, self.bias_grad]


class ReluLayer:
    def __init__(self):
        self.training = True
        self._mask = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return np.maximum(x, 0.0)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return grad_out * self._mask

    def parameters(self):
        return []

    def gradients(self):
        return []


class BatchNormLayer:
    """Batch normalization over the batch axis for 2-D activations.

    Training mode normalizes with population batch statistics and keeps an
    exponential running estimate (running <- (1-momentum)*running +
    momentum*batch). Inference mode normalizes with the running statistics
    only, so the output of a row never depends on batch composition. The
    backward pass in training mode goes through the batch statistics.
    """

    def __init__(self, num_features: int, epsilon: float = 1e-5, momentum: float = 0.1):
        self.scale = np.ones(num_features)
        self.shift = np.zeros(num_features)
        self.running_mean = np.zeros(num_features)
        self.running_var = np.ones(num_features)
        self.epsilon = epsilon
        self.momentum = momentum
        self.scale_grad = np.zeros_like(self.scale)
        self.shift_grad = np.zeros_like(self.shift)
        self.training = True
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        if self.training:
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            inv_std = 1.0 / np.sqrt(var + self.epsilon)
            x_hat = (x - mean) * inv_std
            self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mean
            self.running_var = (1 - self.momentum) * self.running_var + self.momentum * var
            self._cache = (x_hat, inv_std, True)
        else:
            inv_std = 1.0 / np.sqrt(self.running_var + self.epsilon)
            x_hat = (x - self.running_mean) * inv_std
            self._cache = (x_hat, inv_std, False)
        return self.scale * x_hat + self.shift

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x_hat, inv_std, was_training = self._cache
        self.shift_grad = grad_out.sum(axis=0)
        self.scale_grad = (grad_out * x_hat).sum(axis=0)
        d_xhat = grad_out * self.scale
        if not was_training:
            # running statistics are constants
            return d_xhat * inv_std
        return inv_std * (
            d_xhat - d_xhat.mean(axis=0) - x_hat * (d_xhat * x_hat).mean(axis=0)
        )

    def parameters(self):
        return [self.scale, self.shift]

    def gradients(self):
        return [self.scale_grad, self.shift_grad]


class DropoutLayer:
    """Inverted dropout: kept units are scaled by 1/(1-rate) during training."""

    def __init__(self, rate: float, rng: np.random.Generator):
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")
        self.rate = rate
        self.rng = rng
        self.training = True
        self.last_mask = None
        self._active = False

    def forward(self, x: np.ndarray) -> np.ndarray:
        if not self.training or self.rate == 0.0:
            self._active = False
            return x
        keep = 1.0 - self.rate
        self.last_mask = (self.rng.random(x.shape) >= self.rate) / keep
        self._active = True
        return x * self.last_mask

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if not self._active:
            return grad_out
        return grad_out * self.last_mask

    def parameters(self):
        return []

    def gradients(self):
        return []


class MlpModel:
    """Fixed-width MLP: depth x (dense -> relu -> batch norm -> dropout), then
    a final dense layer to 2 logits."""

    def __init__(
        self,
        input_dim: int,
        depth: int,
        width: int = 50,
        dropout_rate: float = 0.5,
        rng: np.random.Generator | None = None,
    ):
        if depth < 1:
            raise ValueError("depth must be >= 1")
        self.rng = rng if rng is not None else np.random.default_rng()
        self.input_dim = input_dim
        self.depth = depth
        self.width = width
        self.layers = []
        fan_in = input_dim
        for _ in range(depth):
            self.layers.append(DenseLayer(fan_in, width, self.rng))
            self.layers.append(ReluLayer())
            self.layers.append(BatchNormLayer(width))
            self.layers.append(DropoutLayer(dropout_rate, self.rng))
            fan_in = width
        self.layers.append(DenseLayer(fan_in, 2, self.rng))
        self.training = True
        self._forwarded = False

    def train_mode(self):
        self.training = True
        for layer in self.layers:
            layer.training = True
        return self

    def eval_mode(self):
        self.training = False
        for layer in self.layers:
            layer.training = False
        return self

    def forward(self, batch: np.ndarray) -> np.ndarray:
        batch = np.asarray(batch, dtype=float)
        if batch.ndim != 2 or batch.shape[1] != self.input_dim:
            raise ValueError(
                f"batch width {batch.shape} does not match model input width {self.input_dim}"
            )
        if self.training and batch.shape[0] < 2:
            raise ValueError("training-mode forward needs at least 2 rows for batch norm")
        out = batch
        for layer in self.layers:
            out = layer.forward(out)
        self._forwarded = True
        return out

    def backward(self, loss_grad_at_logits: np.ndarray) -> np.ndarray:
        if not self._forwarded:
            raise RuntimeError("backward called without a matching forward pass")
        grad = np.asarray(loss_grad_at_logits, dtype=float)
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def parameters(self):
        params = []
        for layer in self.layers:
            params.extend(layer.parameters())
        return params

    def gradients(self):
        grads = []
        for layer in self.layers:
            grads.extend(layer.gradients())
        return grads

    def snapshot(self):
        """Full state copy: trainable parameters plus batch-norm running
        statistics, so a restored model reproduces its inference outputs."""
        state = [p.copy() for p in self.parameters()]
        for layer in self.layers:
            if isinstance(layer, BatchNormLayer):
                state.append(layer.running_mean.copy())
                state.append(layer.running_var.copy())
        return state

    def restore(self, snap) -> None:
        params = self.parameters()
        if len(snap) != len(params) + 2 * sum(
            isinstance(l, BatchNormLayer) for l in self.layers
        ):
            raise ValueError("snapshot does not match model structure")
        for p, s in zip(params, snap):
            p[...] = s
        pos = len(params)
        for layer in self.layers:
            if isinstance(layer, BatchNormLayer):
                layer.running_mean = snap[pos].copy()
                layer.running_var = snap[pos + 1].copy()
                pos += 2

    def predict_proba(self, batch: np.ndarray) -> np.ndarray:
        """Minority-class (label 1) probabilities; inference mode only."""
        if self.training:
            raise RuntimeError("predict_proba requires inference mode (call eval_mode())")
        return softmax(self.forward(batch))[:, 1]


class AdamState:
    """First/second-moment accumulators for one parameter list."""

    def __init__(
        self,
        params,
        learning_rate: float = 0.001,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ):
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.timestep = 0
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon


def adam_step(params, grads, state: AdamState):
    """One Adam update with bias correction; mutates params in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params/grads/state length mismatch")
    state.timestep += 1
    t = state.timestep
    b1, b2 = state.beta1, state.beta2
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"shape mismatch: param {p.shape} vs grad {g.shape}")
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        p -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return params
