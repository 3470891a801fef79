"""One-hidden-layer softmax classifier trained with momentum SGD.

Everything is float64 numpy. Gradients are computed analytically and
checked against central finite differences in the test suite; the
optimizer applies a step-wise learning-rate decay keyed on the global
iteration number.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset


class TrainingDiverged(RuntimeError):
    """Raised when a gradient step produces non-finite parameters."""


@dataclass
class MlpModel:
    """Weights and biases of the two affine layers."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self) -> None:
        self.w1 = np.asarray(self.w1, dtype=np.float64)
        self.b1 = np.asarray(self.b1, dtype=np.float64)
        self.w2 = np.asarray(self.w2, dtype=np.float64)
        self.b2 = np.asarray(self.b2, dtype=np.float64)
        d, h = self.w1.shape
        h2, c = self.w2.shape
        if h != h2 or self.b1.shape != (h,) or self.b2.shape != (c,):
            raise ValueError("layer shapes are inconsistent")

    @property
    def n_features(self) -> int:
        return int(self.w1.shape[0])

    @property
    def hidden(self) -> int:
        return int(self.w1.shape[1])

    @property
    def n_classes(self) -> int:
        return int(self.w2.shape[1])

    @property
    def param_count(self) -> int:
        return self.w1.size + self.b1.size + self.w2.size + self.b2.size


@dataclass
class OptimizerState:
    """Momentum buffer plus the learning-rate schedule."""

    velocity: np.ndarray
    learning_rate: float
    momentum: float = 0.9
    decay_factor: float = 0.1
    decay_iterations: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        self.velocity = np.asarray(self.velocity, dtype=np.float64)
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if not 0.0 < self.decay_factor <= 1.0:
            raise ValueError("decay_factor must lie in (0, 1]")
        if tuple(sorted(self.decay_iterations)) != tuple(self.decay_iterations):
            raise ValueError("decay_iterations must be sorted ascending")

    @classmethod
    def create(
        cls,
        param_count: int,
        learning_rate: float,
        momentum: float = 0.9,
        decay_factor: float = 0.1,
        decay_iterations: tuple[int, ...] = (),
    ) -> "OptimizerState":
        return cls(
            np.zeros(param_count), learning_rate, momentum, decay_factor,
            tuple(decay_iterations),
        )


def init_model(n_features: int, hidden: int, n_classes: int, seed) -> MlpModel:
    """Uniform init scaled by fan-in plus fan-out; biases start at zero."""
    if min(n_features, hidden, n_classes) < 1:
        raise ValueError("all dimensions must be positive")
    rng = np.random.default_rng(seed)
    lim1 = np.sqrt(6.0 / (n_features + hidden))
    lim2 = np.sqrt(6.0 / (hidden + n_classes))
    w1 = rng.uniform(-lim1, lim1, size=(n_features, hidden))
    w2 = rng.uniform(-lim2, lim2, size=(hidden, n_classes))
    return MlpModel(w1, np.zeros(hidden), w2, np.zeros(n_classes))


def get_params(model: MlpModel) -> np.ndarray:
    """Flatten parameters in (w1, b1, w2, b2) order."""
    return np.concatenate(
        [model.w1.ravel(), model.b1.ravel(), model.w2.ravel(), model.b2.ravel()]
    )


def with_params(model: MlpModel, flat: np.ndarray) -> MlpModel:
    """Rebuild a model of the same shape from a flat parameter vector."""
    flat = np.asarray(flat, dtype=np.float64)
    if flat.shape != (model.param_count,):
        raise ValueError("flat vector length does not match the model")
    d, h, c = model.n_features, model.hidden, model.n_classes
    i = 0
    w1 = flat[i:i + d * h].reshape(d, h); i += d * h
    b1 = flat[i:i + h]; i += h
    w2 = flat[i:i + h * c].reshape(h, c); i += h * c
    b2 = flat[i:i + c]
    return MlpModel(w1.copy(), b1.copy(), w2.copy(), b2.copy())


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def forward(model: MlpModel, features: np.ndarray) -> np.ndarray:
    """Class probabilities, one row per input; rows sum to one."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise ValueError("features must be (n, n_features)")
    if not np.isfinite(x).all():
        raise ValueError("features must be finite")
    hidden = np.maximum(x @ model.w1 + model.b1, 0.0)
    return _softmax(hidden @ model.w2 + model.b2)


def loss_and_grads(
    model: MlpModel,
    features: np.ndarray,
    labels: np.ndarray,
    loss_weights: np.ndarray,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Weighted cross-entropy, its gradient, and the target probabilities.

    Loss is ``mean_i weights[i] * (-ln p_i[y_i])``; the gradient comes
    back flat in (w1, b1, w2, b2) order. The third return value holds
    each instance's probability for its own label, for history updates.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    lw = np.asarray(loss_weights, dtype=np.float64)
    n = x.shape[0]
    if y.shape != (n,) or lw.shape != (n,):
        raise ValueError("labels and loss_weights must match the batch size")
    if (y < 0).any() or (y >= model.n_classes).any():
        raise ValueError("labels out of range")
    if not np.isfinite(x).all():
        raise ValueError("features must be finite")
    if not np.isfinite(lw).all() or (lw < 0.0).any():
        raise ValueError("loss_weights must be finite and non-negative")

    with np.errstate(over="ignore", invalid="ignore"):
        pre = x @ model.w1 + model.b1
        hidden = np.maximum(pre, 0.0)
        probs = _softmax(hidden @ model.w2 + model.b2)
    if not np.isfinite(probs).all():
        raise TrainingDiverged("non-finite probabilities in forward pass")
    p_target = probs[np.arange(n), y]
    tiny = np.finfo(np.float64).tiny
    loss = float(np.mean(lw * -np.log(np.maximum(p_target, tiny))))

    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits *= lw[:, np.newaxis] / n
    dw2 = hidden.T @ dlogits
    db2 = dlogits.sum(axis=0)
    dhidden = dlogits @ model.w2.T
    dhidden[pre <= 0.0] = 0.0
    dw1 = x.T @ dhidden
    db1 = dhidden.sum(axis=0)
    grad = np.concatenate([dw1.ravel(), db1.ravel(), dw2.ravel(), db2.ravel()])
    return loss, grad, p_target


def effective_rate(opt: OptimizerState, iteration: int) -> float:
    """Base rate decayed once for every schedule threshold at or below now."""
    hits = int(np.searchsorted(np.asarray(opt.decay_iterations), iteration, side="right"))
    return opt.learning_rate * opt.decay_factor ** hits


def sgd_step(
    model: MlpModel,
    opt: OptimizerState,
    grad: np.ndarray,
    iteration: int,
) -> tuple[MlpModel, OptimizerState]:
    """One momentum step; raises ``TrainingDiverged`` on non-finite output."""
    grad = np.asarray(grad, dtype=np.float64)
    params = get_params(model)
    if grad.shape != params.shape:
        raise ValueError("gradient length does not match the model")
    rate = effective_rate(opt, iteration)
    with np.errstate(over="ignore", invalid="ignore"):
        velocity = opt.momentum * opt.velocity - rate * grad
        params = params + velocity
    if not np.isfinite(params).all():
        raise TrainingDiverged(f"non-finite parameters at iteration {iteration}")
    new_opt = OptimizerState(
        velocity, opt.learning_rate, opt.momentum, opt.decay_factor, opt.decay_iterations
    )
    return with_params(model, params), new_opt


def evaluate(model: MlpModel, dataset: Dataset) -> float:
    """Error rate under argmax prediction (ties go to the lower class index)."""
    if len(dataset) == 0:
        raise ValueError("dataset must be non-empty")
    probs = forward(model, dataset.features)
    preds = probs.argmax(axis=1)
    return float(np.mean(preds != dataset.observed_labels))


def save_checkpoint(model: MlpModel, iteration: int, path) -> None:
    """Header line (JSON: dims, iteration, count) then one parameter per line."""
    flat = get_params(model)
    header = {
        "layout": "w1,b1,w2,b2",
        "n_features": model.n_features,
        "hidden": model.hidden,
        "n_classes": model.n_classes,
        "iteration": int(iteration),
        "count": int(flat.size),
    }
    with open(Path(path), "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for v in flat:
            fh.write(repr(float(v)) + "\n")


def load_checkpoint(path) -> tuple[MlpModel, int]:
    """Inverse of ``save_checkpoint``; round-trips parameters exactly."""
    with open(Path(path)) as fh:
        header = json.loads(fh.readline())
        values = [float(line) for line in fh if line.strip()]
    if len(values) != header["count"]:
        raise ValueError(f"{path}: expected {header['count']} parameters, found {len(values)}")
    d, h, c = header["n_features"], header["hidden"], header["n_classes"]
    template = MlpModel(np.zeros((d, h)), np.zeros(h), np.zeros((h, c)), np.zeros(c))
    return with_params(template, np.asarray(values)), int(header["iteration"])
