"""Fully connected binary classifier written against numpy.

ReLU hidden layers with inverted dropout, a single sigmoid output unit,
binary cross-entropy plus an L2 penalty on the weight matrices, Adam
updates and early stopping on validation loss.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from saad.dataset import Dataset
from saad.errors import ValidationError

log = logging.getLogger(__name__)

LOSS_CLAMP = 1e-7


@dataclass(frozen=True)
class NetworkConfig:
    hidden_sizes: tuple[int, ...] = (32, 16)
    dropout_rates: tuple[float, ...] = (0.2, 0.2)
    l2_lambda: float = 1e-4
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    max_epochs: int = 200
    patience: int = 10
    batch_size: int = 32
    validation_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        object.__setattr__(self, "dropout_rates", tuple(float(r) for r in self.dropout_rates))
        if len(self.dropout_rates) != len(self.hidden_sizes):
            raise ValidationError(
                f"{len(self.dropout_rates)} dropout rates for {len(self.hidden_sizes)} hidden layers"
            )
        if any(h < 1 for h in self.hidden_sizes):
            raise ValidationError("hidden layer sizes must be positive")
        if any(not 0.0 <= r < 1.0 for r in self.dropout_rates):
            raise ValidationError("dropout rates must lie in [0, 1)")
        if self.l2_lambda < 0:
            raise ValidationError("l2_lambda must be non-negative")
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be positive")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ValidationError("Adam betas must lie in (0, 1)")
        if not self.adam_epsilon > 0:
            raise ValidationError("adam_epsilon must be positive")
        if self.max_epochs < 1 or self.patience < 1 or self.batch_size < 1:
            raise ValidationError("max_epochs, patience and batch_size must be positive")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValidationError("validation_fraction must lie in (0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_sizes"] = list(self.hidden_sizes)
        d["dropout_rates"] = list(self.dropout_rates)
        return d


@dataclass(frozen=True)
class Network:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    config: NetworkConfig
    input_dim: int

    def __post_init__(self):
        if len(self.weights) != len(self.biases):
            raise ValidationError("weights and biases differ in layer count")
        fan_in = self.input_dim
        for W, b in zip(self.weights, self.biases):
            if W.ndim != 2 or W.shape[0] != fan_in or b.shape != (W.shape[1],):
                raise ValidationError("layer shapes do not chain")
            fan_in = W.shape[1]
        if fan_in != 1:
            raise ValidationError("output layer must have exactly one unit")

    @property
    def params(self) -> list[np.ndarray]:
        """Parameters interleaved as W0, b0, W1, b1, ..."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def with_params(self, params: Sequence[np.ndarray]) -> "Network":
        return replace(self, weights=tuple(params[0::2]), biases=tuple(params[1::2]))


@dataclass
class Cache:
    """Everything the backward pass needs from one forward call."""

    net_id: int
    inputs: list[np.ndarray]        # input of each layer
    pre_activations: list[np.ndarray]
    masks: list[np.ndarray | None]  # scaled keep-masks per hidden layer
    v: np.ndarray


@dataclass(frozen=True)
class Prediction:
    label: int
    confidence: float


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class AdamState:
    first_moments: tuple[np.ndarray, ...]
    second_moments: tuple[np.ndarray, ...]
    timestep: int = 0

    @classmethod
    def zeros_like(cls, net: Network) -> "AdamState":
        zeros = tuple(np.zeros_like(p) for p in net.params)
        return cls(zeros, tuple(np.zeros_like(p) for p in net.params), 0)


def sigmoid(z):
    # split by sign so exp never overflows
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def init_network(input_dim: int, cfg: NetworkConfig) -> Network:
    """Uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases."""
    if int(input_dim) != input_dim or input_dim < 1:
        raise ValidationError(f"input_dim must be a positive integer, got {input_dim}")
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
    sizes = [int(input_dim), *cfg.hidden_sizes, 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Network(tuple(weights), tuple(biases), cfg, int(input_dim))


def _as_rows(net: Network, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x.reshape(1, -1) if single else x
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise ValidationError(f"network expects {net.input_dim} inputs, got shape {x.shape}")
    return X, single


def forward(net: Network, x, mode: str = "infer", rng: np.random.Generator | None = None,
            masks: Sequence[np.ndarray | None] | None = None):
    """Return ``(v, cache)``; ``v`` is scalar for a single instance, a vector for a batch.

    In ``"train"`` mode each hidden output is multiplied by a keep-mask scaled
    by ``1 / (1 - rate)``. Masks are drawn from ``rng`` unless given.
    """
    if mode not in ("train", "infer"):
        raise ValidationError(f"mode must be 'train' or 'infer', got {mode!r}")
    X, single = _as_rows(net, x)
    rates = net.config.dropout_rates
    if mode == "train" and masks is None and rng is None and any(r > 0 for r in rates):
        raise ValidationError("train mode with dropout needs an rng or explicit masks")
    inputs, pre, used = [], [], []
    a = X
    n_hidden = len(net.weights) - 1
    for layer, (W, b) in enumerate(zip(net.weights, net.biases)):
        inputs.append(a)
        z = a @ W + b
        pre.append(z)
        if layer == n_hidden:
            break
        a = np.maximum(z, 0.0)
        mask = None
        if mode == "train":
            if masks is not None:
                mask = masks[layer]
            elif rates[layer] > 0:
                keep = rng.random(a.shape) >= rates[layer]
                mask = keep / (1.0 - rates[layer])
        if mask is not None:
            a = a * mask
        used.append(mask)
    v = sigmoid(pre[-1][:, 0])
    cache = Cache(id(net), inputs, pre, used, v)
    return (float(v[0]) if single else v), cache


def l2_penalty(net: Network) -> float:
    return net.config.l2_lambda * float(sum(np.sum(W * W) for W in net.weights))


def bce_l2_loss(v, y, net: Network) -> float:
    """Mean binary cross-entropy over the batch plus ``l2_lambda * sum(W**2)``.

    ``v`` is clamped to ``[1e-7, 1 - 1e-7]`` here only.
    """
    v = np.clip(np.asarray(v, dtype=np.float64), LOSS_CLAMP, 1.0 - LOSS_CLAMP)
    y = np.asarray(y, dtype=np.float64)
    bce = -(y * np.log(v) + (1.0 - y) * np.log(1.0 - v))
    return float(np.mean(bce)) + l2_penalty(net)


def backward(net: Network, cache: Cache, y) -> list[np.ndarray]:
    """Gradients of :func:`bce_l2_loss`, ordered like ``net.params``."""
    if cache.net_id != id(net):
        raise ValidationError("cache was produced by a different network")
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.shape[0] != cache.v.shape[0]:
        raise ValidationError(f"{y.shape[0]} targets for a batch of {cache.v.shape[0]}")
    lam = net.config.l2_lambda
    grads: list[np.ndarray] = [None] * (2 * len(net.weights))
    dz = ((cache.v - y) / y.shape[0]).reshape(-1, 1)
    for layer in range(len(net.weights) - 1, -1, -1):
        W = net.weights[layer]
        grads[2 * layer] = cache.inputs[layer].T @ dz + 2.0 * lam * W
        grads[2 * layer + 1] = dz.sum(axis=0)
        if layer == 0:
            break
        da = dz @ W.T
        mask = cache.masks[layer - 1]
        if mask is not None:
            da = da * mask
        dz = da * (cache.pre_activations[layer - 1] > 0)
    return grads


def adam_update(net: Network, state: AdamState, grads: Sequence[np.ndarray], lr: float | None = None):
    """One bias-corrected Adam step; returns ``(new_net, new_state)``."""
    cfg = net.config
    lr = cfg.learning_rate if lr is None else lr
    params = net.params
    if len(grads) != len(params) or any(g.shape != p.shape for g, p in zip(grads, params)):
        raise ValidationError("gradient shapes do not match parameters")
    b1, b2, eps = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon
    t = state.timestep + 1
    new_p, new_m, new_s = [], [], []
    for p, g, m, s in zip(params, grads, state.first_moments, state.second_moments):
        m = b1 * m + (1.0 - b1) * g
        s = b2 * s + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        s_hat = s / (1.0 - b2 ** t)
        new_p.append(p - lr * m_hat / (np.sqrt(s_hat) + eps))
        new_m.append(m)
        new_s.append(s)
    return net.with_params(new_p), AdamState(tuple(new_m), tuple(new_s), t)


class EarlyStopping:
    """Tracks the best validation loss; signals a stop after ``patience`` epochs without improvement."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_loss = math.inf
        self.best_epoch = 0
        self.wait = 0

    def update(self, epoch: int, loss: float) -> bool:
        """Record ``loss`` for ``epoch`` (1-based). True means stop now."""
        if loss < self.best_loss:
            self.best_loss, self.best_epoch, self.wait = loss, epoch, 0
            return False
        self.wait += 1
        return self.wait >= self.patience


def predict_proba(net: Network, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    v, _ = forward(net, X.reshape(-1, net.input_dim), "infer")
    return v


def predict(net: Network, x) -> Prediction:
    v, _ = forward(net, x, "infer")
    return Prediction(int(v > 0.5), float(v))


def predict_batch(net: Network, X) -> tuple[np.ndarray, np.ndarray]:
    """(labels, confidences) for every row of ``X``."""
    v = predict_proba(net, X)
    return (v > 0.5).astype(np.int64), v


def train(ds: Dataset, cfg: NetworkConfig) -> tuple[Network, TrainHistory]:
    """Mini-batch Adam with a held-out validation split and early stopping.

    Returns the parameters of the epoch with the lowest validation loss.
    """
    if ds.labels is None:
        raise ValidationError("training needs ground-truth labels")
    X = np.asarray(ds.features, dtype=np.float64)
    y = np.asarray(ds.labels, dtype=np.float64)
    m = X.shape[0]
    if m < cfg.batch_size:
        raise ValidationError(f"{m} rows is fewer than one batch of {cfg.batch_size}")

    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    perm = rng.permutation(m)
    n_val = min(max(1, math.floor(cfg.validation_fraction * m)), m - 1)
    val_idx, tr_idx = np.sort(perm[:n_val]), np.sort(perm[n_val:])
    Xtr, ytr, Xval, yval = X[tr_idx], y[tr_idx], X[val_idx], y[val_idx]

    net = init_network(X.shape[1], cfg)
    state = AdamState.zeros_like(net)
    history = TrainHistory()
    stopper = EarlyStopping(cfg.patience)
    best = net
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(Xtr.shape[0])
        for start in range(0, order.shape[0], cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            _, cache = forward(net, Xtr[batch], "train", rng=rng)
            grads = backward(net, cache, ytr[batch])
            net, state = adam_update(net, state, grads)

        history.train_loss.append(bce_l2_loss(predict_proba(net, Xtr), ytr, net))
        v_val = predict_proba(net, Xval)
        val_loss = bce_l2_loss(v_val, yval, net)
        history.val_loss.append(val_loss)
        history.val_accuracy.append(float(np.mean((v_val > 0.5) == (yval == 1))))
        stop = stopper.update(epoch, val_loss)
        if stopper.best_epoch == epoch:
            best = net
        log.debug("epoch %d train %.5f val %.5f", epoch, history.train_loss[-1], val_loss)
        if stop:
            history.stopped_early = epoch < cfg.max_epochs
            break
    history.best_epoch = stopper.best_epoch
    return best, history
