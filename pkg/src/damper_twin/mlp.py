"""Fully connected regressor with a single linear output neuron, trained by
backpropagation on the mean squared error.

Everything is plain numpy in float64. Weight matrices are stored as
``(fan_in, fan_out)`` so a batch ``X`` of shape ``(n, fan_in)`` propagates as
``X @ W + b``.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

OPTIMIZERS = ("sgd-momentum", "adaptive-moments")


class TrainingDiverged(RuntimeError):
    pass


class ModelFileError(ValueError):
    pass


def _tanh_grad(a):
    return 1.0 - a * a


def _relu_grad(a):
    return (a > 0).astype(a.dtype)


# activation(z) and its derivative expressed through the activation value
ACTIVATIONS = {
    "tanh": (np.tanh, _tanh_grad),
    "relu": (lambda z: np.maximum(z, 0.0), _relu_grad),
}


@dataclass(frozen=True)
class MlpConfig:
    layer_sizes: tuple = (3, 32, 32, 1)
    activation: str = "tanh"
    learning_rate: float = 1e-3
    batch_size: int = 64
    epochs: int = 200
    seed: int = 0
    optimizer: str = "adaptive-moments"
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    early_stopping: bool = False
    validation_fraction: float = 0.1
    patience: int = 10

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 3:
            raise ValueError("need at least one hidden layer")
        if sizes[0] != 3 or sizes[-1] != 1:
            raise ValueError(f"layer_sizes must start with 3 and end with 1, got {list(sizes)}")
        if any(s < 1 for s in sizes):
            raise ValueError("layer sizes must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.learning_rate < 0 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("invalid learning_rate, batch_size or epochs")
        if not 0 < self.validation_fraction < 1:
            raise ValueError("validation_fraction must lie in (0, 1)")

    @classmethod
    def from_dict(cls, doc: Optional[dict]) -> "MlpConfig":
        doc = dict(doc or {})
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown mlp option(s): {sorted(unknown)}")
        return cls(**doc)


@dataclass
class MlpModel:
    weights: list
    biases: list
    activation: str = "tanh"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("weights and biases must be non-empty lists of equal length")
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.shape != (W.shape[1],):
                raise ValueError(f"layer {k}: weight {W.shape} / bias {b.shape} mismatch")
            if k and W.shape[0] != self.weights[k - 1].shape[1]:
                raise ValueError(
                    f"layer {k}: fan_in {W.shape[0]} != previous fan_out "
                    f"{self.weights[k - 1].shape[1]}"
                )

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights]

    def predict(self, X) -> np.ndarray:
        """Batch forward pass; ``X`` has shape ``(n, 3)``, returns ``(n,)``."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.layer_sizes[0]:
            raise ValueError(f"expected inputs of shape (n, {self.layer_sizes[0]}), got {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("non-finite input")
        return _forward(self, X)[-1][:, 0]

    def copy(self) -> "MlpModel":
        return copy.deepcopy(self)


def init_model(cfg: MlpConfig) -> MlpModel:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    rng = np.random.default_rng(cfg.seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(cfg.layer_sizes[:-1], cfg.layer_sizes[1:]):
        limit = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights, biases, cfg.activation, {"seed": cfg.seed, "epochs_run": 0})


def _forward(model: MlpModel, X: np.ndarray) -> list[np.ndarray]:
    """Activations of every layer, input first; the output layer is linear."""
    act = ACTIVATIONS[model.activation][0]
    outs = [X]
    last = len(model.weights) - 1
    for k, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = outs[-1] @ W + b
        outs.append(z if k == last else act(z))
    return outs


def forward(model: MlpModel, x) -> float:
    """Prediction for a single input vector ``(V, I, displacement)``."""
    x = np.asarray(x, dtype=float)
    return float(model.predict(x.reshape(1, -1))[0])


def backward(model: MlpModel, X, y):
    """Gradients of the batch-mean squared error.

    Returns ``(grad_weights, grad_biases, loss)``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if len(y) == 0:
        raise ValueError("empty batch")
    outs = _forward(model, X)
    if not np.all(np.isfinite(outs[-1])):
        raise TrainingDiverged("non-finite activations")
    resid = outs[-1][:, 0] - y
    loss = float(np.mean(resid**2))
    dact = ACTIVATIONS[model.activation][1]

    delta = (2.0 / len(y)) * resid[:, None]
    gw = [None] * len(model.weights)
    gb = [None] * len(model.weights)
    for k in range(len(model.weights) - 1, -1, -1):
        gw[k] = outs[k].T @ delta
        gb[k] = delta.sum(axis=0)
        if k:
            delta = (delta @ model.weights[k].T) * dact(outs[k])
    return gw, gb, loss


def mse(model: MlpModel, X, y) -> float:
    return float(np.mean((model.predict(X) - np.asarray(y, dtype=float)) ** 2))


class _Optimizer:
    def __init__(self, cfg: MlpConfig, params: list):
        self.cfg = cfg
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        cfg = self.cfg
        lr = cfg.learning_rate
        self.t += 1
        if cfg.optimizer == "sgd-momentum":
            for p, g, m in zip(params, grads, self.m):
                m *= cfg.momentum
                m -= lr * g
                p += m
            return
        b1, b2 = cfg.beta1, cfg.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)


def train(model: MlpModel, train_data, cfg: MlpConfig):
    """Mini-batch training on a private copy of ``model``.

    ``train_data`` is a PreparedDataset or an ``(X, y)`` pair. Returns ``(trained_model, loss_history)`` where ``loss_history[e]`` is the
    mean training loss over the batches of epoch ``e``.
    """
    X, y = train_data if isinstance(train_data, tuple) else (train_data.X, train_data.y)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if len(y) == 0:
        raise ValueError("empty training set")
    model = model.copy()
    rng = np.random.default_rng(cfg.seed)

    val = None
    if cfg.early_stopping:
        order = rng.permutation(len(y))
        n_val = max(1, int(round(cfg.validation_fraction * len(y))))
        val = (X[order[:n_val]], y[order[:n_val]])
        X, y = X[order[n_val:]], y[order[n_val:]]
        best = (np.inf, model.copy())
        stale = 0

    params = model.weights + model.biases
    opt = _Optimizer(cfg, params)
    history = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(y))
        total = 0.0
        for start in range(0, len(y), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            try:
                gw, gb, loss = backward(model, X[idx], y[idx])
            except TrainingDiverged:
                raise TrainingDiverged(f"training diverged in epoch {epoch}") from None
            total += loss * len(idx)
            opt.step(params, gw + gb)
        epoch_loss = total / len(y)
        if not np.isfinite(epoch_loss):
            raise TrainingDiverged(f"training diverged in epoch {epoch}")
        history.append(epoch_loss)

        if val is not None:
            val_loss = mse(model, *val)
            if val_loss < best[0]:
                best, stale = (val_loss, model.copy()), 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break

    if val is not None:
        model = best[1]
    model.metadata.update({
        "epochs_run": len(history),
        "final_train_loss": history[-1] if history else None,
        "seed": cfg.seed,
    })
    return model, history


def save_model(model: MlpModel, path) -> None:
    doc = {
        "layer_sizes": model.layer_sizes,
        "activation": model.activation,
        "weights": [W.tolist() for W in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "metadata": model.metadata,
    }
    Path(path).write_text(json.dumps(doc) + "\n", encoding="utf-8")


def load_model(path) -> MlpModel:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        sizes = [int(s) for s in doc["layer_sizes"]]
        weights = [np.array(W, dtype=float) for W in doc["weights"]]
        biases = [np.array(b, dtype=float) for b in doc["biases"]]
        activation = doc["activation"]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"{path}: corrupt model file ({exc})") from None
    expected = list(zip(sizes[:-1], sizes[1:]))
    shapes = [W.shape for W in weights]
    if shapes != expected or [b.shape for b in biases] != [(s,) for s in sizes[1:]]:
        raise ModelFileError(f"{path}: weight shapes {shapes} do not match layer_sizes {sizes}")
    try:
        return MlpModel(weights, biases, activation, doc.get("metadata") or {})
    except ValueError as exc:
        raise ModelFileError(f"{path}: {exc}") from None


__all__ = [
    "MlpConfig", "MlpModel", "TrainingDiverged", "ModelFileError", "init_model",
    "forward", "backward", "train", "mse", "save_model", "load_model",
]
