"""Tiny fully-connected backbone with hand-rolled backprop and Adam.

The model is a plain MLP with ReLU hidden activations and a linear output
layer whose logits feed one of the heads in :mod:`fadel.heads`.  Forward,
backward, and the optimizer are explicit numpy; no autodiff.  Training is
deterministic given (config, data, seed): weight init and per-epoch
shuffles draw from derived :class:`~fadel.rng.RngStream` substreams.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import heads
from .errors import ConfigError, InputError, NumericError, VersionError
from .ioutil import atomic_path, savez_deterministic
from .metrics import eer_from_scores
from .rng import RngStream

CHECKPOINT_VERSION = 1


@dataclass
class MlpModel:
    """Parameters of a fully-connected network.

    ``weights[i]`` has shape (fan_in, fan_out); ``biases[i]`` has shape
    (fan_out,).  Layer i computes x @ W_i + b_i, with ReLU after every
    layer except the last.
    """

    weights: list
    biases: list

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple([self.weights[0].shape[0]] + [w.shape[1] for w in self.weights])

    @property
    def n_params(self) -> int:
        return int(sum(w.size for w in self.weights) + sum(b.size for b in self.biases))

    def copy(self) -> "MlpModel":
        return MlpModel([w.copy() for w in self.weights], [b.copy() for b in self.biases])


def init_model(dims, rng: RngStream) -> MlpModel:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases."""
    dims = tuple(int(d) for d in dims)
    if len(dims) < 2:
        raise ConfigError("network needs at least an input and an output layer")
    if any(d <= 0 for d in dims):
        raise ConfigError(f"layer sizes must be positive, got {dims}")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights, biases)


@dataclass
class ForwardCache:
    """Intermediate activations kept alive for one backward pass."""

    model: MlpModel
    inputs: list  # activation entering each layer; inputs[0] is the batch
    pre: list  # pre-activation of each hidden layer


def forward(model: MlpModel, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Batch forward pass; returns (logits, cache)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise InputError(f"expected a 2-D batch, got shape {x.shape}")
    if x.shape[1] != model.dims[0]:
        raise InputError(f"batch has {x.shape[1]} features, model expects {model.dims[0]}")
    inputs, pre = [x], []
    h = x
    n_layers = len(model.weights)
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        if i < n_layers - 1:
            pre.append(z)
            h = np.maximum(z, 0.0)
            inputs.append(h)
        else:
            h = z
    return h, ForwardCache(model, inputs, pre)


def backward(model: MlpModel, cache: ForwardCache, dlogits: np.ndarray) -> list:
    """Exact gradients [(dW, db), ...] for a cached forward pass."""
    if cache.model is not model:
        raise InputError("forward cache does not belong to this model")
    dlogits = np.asarray(dlogits, dtype=np.float64)
    if dlogits.shape != (cache.inputs[0].shape[0], model.dims[-1]):
        raise InputError("dlogits shape does not match the cached forward batch")
    grads = [None] * len(model.weights)
    g = dlogits
    for i in range(len(model.weights) - 1, -1, -1):
        grads[i] = (cache.inputs[i].T @ g, g.sum(axis=0))
        if i > 0:
            g = (g @ model.weights[i].T) * (cache.pre[i - 1] > 0.0)
    return grads


@dataclass
class AdamState:
    """Adam optimizer state: per-parameter moments plus hyperparameters."""

    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m_w: list = field(default_factory=list)
    v_w: list = field(default_factory=list)
    m_b: list = field(default_factory=list)
    v_b: list = field(default_factory=list)

    @classmethod
    def for_model(cls, model: MlpModel, learning_rate: float, beta1: float = 0.9,
                  beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        state = cls(learning_rate, beta1, beta2, eps)
        state.m_w = [np.zeros_like(w) for w in model.weights]
        state.v_w = [np.zeros_like(w) for w in model.weights]
        state.m_b = [np.zeros_like(b) for b in model.biases]
        state.v_b = [np.zeros_like(b) for b in model.biases]
        return state


def adam_step(model: MlpModel, grads: list, state: AdamState) -> None:
    """One bias-corrected Adam update, in place."""
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for i, (dw, db) in enumerate(grads):
        state.m_w[i] = state.beta1 * state.m_w[i] + (1.0 - state.beta1) * dw
        state.v_w[i] = state.beta2 * state.v_w[i] + (1.0 - state.beta2) * dw * dw
        state.m_b[i] = state.beta1 * state.m_b[i] + (1.0 - state.beta1) * db
        state.v_b[i] = state.beta2 * state.v_b[i] + (1.0 - state.beta2) * db * db
        model.weights[i] -= state.learning_rate * (state.m_w[i] / c1) / (np.sqrt(state.v_w[i] / c2) + state.eps)
        model.biases[i] -= state.learning_rate * (state.m_b[i] / c1) / (np.sqrt(state.v_b[i] / c2) + state.eps)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run."""

    head: str = "evidential"  # "softmax" | "evidential"
    activation: str = "softplus"
    hidden_dims: tuple = (64, 64)
    epochs: int = 100
    batch_size: int = 64
    learning_rate: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    class_weights: tuple = (1.0, 9.0)
    kl_weight: float = 0.1
    kl_anneal_epochs: int = 10

    def validate(self) -> "TrainConfig":
        if self.head not in heads.HEADS:
            raise ConfigError(f"unknown head {self.head!r}; choose from {heads.HEADS}")
        if self.head == "evidential" and self.activation not in heads.ACTIVATIONS:
            raise ConfigError(
                f"unknown evidence activation {self.activation!r}; choose from {heads.ACTIVATIONS}"
            )
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if len(self.class_weights) != 2 or any(w <= 0 for w in self.class_weights):
            raise ConfigError("class_weights must be two positive numbers")
        if self.kl_weight < 0:
            raise ConfigError("kl_weight must be >= 0")
        if any(int(d) <= 0 for d in self.hidden_dims):
            raise ConfigError(f"hidden layer sizes must be positive, got {tuple(self.hidden_dims)}")
        return self


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    dev_eer: float


@dataclass
class TrainResult:
    """Best-on-dev model plus the full epoch log."""

    model: MlpModel
    best_epoch: int
    best_dev_eer: float
    log: list


def _param_norms(model: MlpModel) -> str:
    parts = [f"W{i}={float(np.linalg.norm(w)):.3e}" for i, w in enumerate(model.weights)]
    return ", ".join(parts)


def _one_hot(y: np.ndarray, k: int = 2) -> np.ndarray:
    out = np.zeros((y.shape[0], k))
    out[np.arange(y.shape[0]), y] = 1.0
    return out


def train(config: TrainConfig, x_train: np.ndarray, y_train: np.ndarray,
          x_dev: np.ndarray, y_dev: np.ndarray, seed: int) -> TrainResult:
    """Train an MLP detector and keep the checkpoint with best dev EER.

    ``y_*`` are int labels with 0 = spoof, 1 = bonafide.  Loss gradients
    come from the analytic head formulas; the dev set is scored each
    epoch with the bonafide-probability detection score.
    """
    config.validate()
    x_train = np.asarray(x_train, dtype=np.float64)
    x_dev = np.asarray(x_dev, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.int64)
    y_dev = np.asarray(y_dev, dtype=np.int64)
    if x_train.ndim != 2 or x_train.shape[0] != y_train.shape[0]:
        raise InputError("x_train and y_train disagree on the number of samples")
    if set(np.unique(y_train)) - {0, 1} or set(np.unique(y_dev)) - {0, 1}:
        raise InputError("labels must be 0 (spoof) or 1 (bonafide)")
    if not ((y_dev == 0).any() and (y_dev == 1).any()):
        raise InputError("dev split needs both classes to compute an EER")

    dims = (x_train.shape[1],) + tuple(int(d) for d in config.hidden_dims) + (2,)
    root = RngStream(seed)
    model = init_model(dims, root.derive("init"))
    state = AdamState.for_model(model, config.learning_rate, config.beta1, config.beta2, config.eps)
    weights = np.asarray(config.class_weights, dtype=np.float64)
    targets = _one_hot(y_train)

    n = x_train.shape[0]
    best_model = model.copy()
    best_eer = float("inf")
    best_epoch = 0
    log: list = []

    for epoch in range(1, config.epochs + 1):
        order = root.derive("shuffle", epoch).permutation(n)
        if config.head == "evidential" and config.kl_weight > 0:
            anneal = min(1.0, epoch / max(1, config.kl_anneal_epochs))
            kl_w = config.kl_weight * anneal
        else:
            kl_w = 0.0

        loss_sum = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            xb, tb = x_train[batch], targets[batch]
            logits, cache = forward(model, xb)
            if config.head == "softmax":
                losses, dlogits = heads.wce_loss(logits, tb, weights)
            else:
                alpha = heads.evidence_to_alpha(logits, config.activation)
                losses = heads.edl_loss(alpha, tb, weights, kl_w)
                dlogits = heads.edl_loss_grad(logits, config.activation, tb, weights, kl_w)
            batch_loss = float(np.mean(losses))
            if not np.isfinite(batch_loss):
                raise NumericError(
                    f"non-finite loss at epoch {epoch}, batch {start // config.batch_size}; "
                    f"parameter norms: {_param_norms(model)}"
                )
            grads = backward(model, cache, dlogits / len(batch))
            adam_step(model, grads, state)
            loss_sum += batch_loss * len(batch)

        dev_scores = _dev_scores(model, x_dev, config)
        dev_eer, _ = eer_from_scores(dev_scores[y_dev == 1], dev_scores[y_dev == 0])
        log.append(EpochLog(epoch, loss_sum / n, dev_eer))
        if dev_eer < best_eer:
            best_eer = dev_eer
            best_epoch = epoch
            best_model = model.copy()

    return TrainResult(best_model, best_epoch, best_eer, log)


def _dev_scores(model: MlpModel, x_dev: np.ndarray, config: TrainConfig) -> np.ndarray:
    logits, _ = forward(model, x_dev)
    pred = heads.predict(logits, config.head, config.activation if config.head == "evidential" else None)
    return np.asarray(pred.bonafide_score)


def save_checkpoint(path, model: MlpModel, meta: dict) -> None:
    """Persist parameters (float64) and metadata atomically as .npz."""
    arrays = {"version": np.array(CHECKPOINT_VERSION), "dims": np.array(model.dims)}
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        arrays[f"w{i}"] = np.asarray(w, dtype=np.float64)
        arrays[f"b{i}"] = np.asarray(b, dtype=np.float64)
    arrays["meta_json"] = np.array(json.dumps(meta, sort_keys=True))
    with atomic_path(Path(path)) as tmp:
        savez_deterministic(tmp, **arrays)


def load_checkpoint(path) -> tuple[MlpModel, dict]:
    """Load a checkpoint written by :func:`save_checkpoint`."""
    try:
        data = np.load(path, allow_pickle=False)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise VersionError(f"unreadable checkpoint {path}: {exc}") from exc
    with data:
        if "version" not in data:
            raise VersionError(f"checkpoint {path} has no version field")
        version = int(data["version"])
        if version != CHECKPOINT_VERSION:
            raise VersionError(
                f"checkpoint {path} is version {version}, this code reads version {CHECKPOINT_VERSION}"
            )
        dims = tuple(int(d) for d in data["dims"])
        weights = [data[f"w{i}"] for i in range(len(dims) - 1)]
        biases = [data[f"b{i}"] for i in range(len(dims) - 1)]
        meta = json.loads(str(data["meta_json"]))
    model = MlpModel(weights, biases)
    if model.dims != dims:
        raise VersionError(f"checkpoint {path} parameter shapes disagree with its dims field")
    return model, meta
