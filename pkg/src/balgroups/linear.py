"""Binary logistic regression trained by (stochastic) gradient descent.

Labels enter the loss as y in {-1, +1}; ``GroupedDataset.signed_labels``
maps the stored class ids {0, 1} onto that convention.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

SNAPSHOT_FORMAT = "balgroups.linear-model"
SNAPSHOT_VERSION = 1


@dataclass(frozen=True, eq=False)
class LinearModel:
    weights: np.ndarray
    bias: float = 0.0
    init_seed: int | None = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1:
            raise ValueError("weights must be a vector")
        if not (np.isfinite(w).all() and np.isfinite(self.bias)):
            raise ValueError("model parameters must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def dim(self) -> int:
        return len(self.weights)

    def params(self) -> np.ndarray:
        """Weights followed by the bias, as one vector of length p + 1."""
        return np.append(self.weights, self.bias)


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer settings.

    ``batch_size=None`` is full-batch gradient descent. ``eval_every`` is in
    optimizer steps; ``None`` evaluates once per epoch.
    """

    learning_rate: float = 0.1
    weight_decay: float = 0.0
    batch_size: int | None = None
    epochs: int = 100
    eval_every: int | None = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be positive or None (full batch)")
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if self.eval_every is not None and self.eval_every < 1:
            raise ValueError("eval_every must be positive")


def init_model(p: int, seed: int) -> LinearModel:
    """Weights ~ Normal(0, 1/p), zero bias."""
    if p < 1:
        raise ValueError("dimension must be at least 1")
    rng = np.random.default_rng(seed)
    return LinearModel(rng.normal(0.0, 1.0 / np.sqrt(p), size=p), 0.0, seed)


def _check_dim(model: LinearModel, x: np.ndarray) -> None:
    if x.shape[-1] != model.dim:
        raise ValueError(f"feature dimension {x.shape[-1]} != model dimension {model.dim}")


def decision_function(model: LinearModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    _check_dim(model, x)
    return x @ model.weights + model.bias


def predict_proba(model: LinearModel, x):
    """Probability of class +1 for one row or a matrix of rows."""
    # scipy's expit branches on sign, so it never overflows.
    return expit(decision_function(model, x))


def log1pexp(z):
    """log(1 + exp(z)) without overflow."""
    return np.logaddexp(0.0, z)


def example_loss(model: LinearModel, x, y):
    """Logistic loss log(1 + exp(-y * (w.x + b))) with y in {-1, +1}."""
    return log1pexp(-np.asarray(y, dtype=np.float64) * decision_function(model, x))


def batch_gradient(model: LinearModel, batch, ds, per_example_weights=None):
    """Gradient of the (weighted) mean logistic loss over ``batch``.

    ``per_example_weights`` are used as given (they should sum to one);
    without them each row gets ``1 / len(batch)``. Weight decay is not
    included here.

    Returns ``(grad_w, grad_b, per_example_losses)``.
    """
    if isinstance(batch, slice):
        x = ds.features[batch]
        y = ds.signed_labels[batch]
    else:
        batch = np.asarray(batch)
        if batch.size == 0:
            raise ValueError("empty batch")
        x = ds.features[batch]
        y = ds.signed_labels[batch]
    return _gradient(model, x, y, per_example_weights)


def _gradient(model: LinearModel, x: np.ndarray, y: np.ndarray, weights=None):
    if len(y) == 0:
        raise ValueError("empty batch")
    _check_dim(model, x)
    margin = y * (x @ model.weights + model.bias)
    if weights is None:
        weights = np.full(len(y), 1.0 / len(y))
    # d/dm log(1+e^{-m}) = -sigmoid(-m)
    coef = -y * expit(-margin) * weights
    return x.T @ coef, float(coef.sum()), log1pexp(-margin)


def sgd_step(model: LinearModel, grad_w, grad_b: float, cfg: TrainConfig) -> LinearModel:
    """One step with L2 decay on the weights only."""
    lr = cfg.learning_rate
    w = model.weights - lr * (np.asarray(grad_w) + cfg.weight_decay * model.weights)
    b = model.bias - lr * grad_b
    if not (np.isfinite(w).all() and np.isfinite(b)):
        raise FloatingPointError("non-finite parameters after SGD step")
    return LinearModel(w, b, model.init_seed)


# --- snapshot files -------------------------------------------------------------
#
# A snapshot is a JSON object:
#   {"format": "balgroups.linear-model", "version": 1, "p": <int>,
#    "init_seed": <int|null>, "params": [w_0, ..., w_{p-1}, b]}
# Floats are written with repr() so loading reproduces every bit.


def model_to_json(model: LinearModel) -> str:
    return json.dumps(
        {
            "format": SNAPSHOT_FORMAT,
            "version": SNAPSHOT_VERSION,
            "p": model.dim,
            "init_seed": model.init_seed,
            "params": model.params().tolist(),
        }
    )


def model_from_json(text: str) -> LinearModel:
    d = json.loads(text)
    if d.get("format") != SNAPSHOT_FORMAT:
        raise ValueError("not a linear-model snapshot")
    if d.get("version") != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {d.get('version')}")
    params = np.asarray(d["params"], dtype=np.float64)
    if len(params) != d["p"] + 1:
        raise ValueError("snapshot length does not match p")
    return LinearModel(params[:-1], params[-1], d.get("init_seed"))


def save_model(model: LinearModel, path) -> None:
    Path(path).write_text(model_to_json(model), encoding="utf-8")


def load_model(path) -> LinearModel:
    return model_from_json(Path(path).read_text(encoding="utf-8"))
