"""Per-instance uncertainty signals derived from prediction histories.

Each training instance keeps a short ring buffer of the probabilities
the model assigned to its (observed) label whenever the instance was in
a batch. The variance of that buffer is the uncertainty weight: stable
predictions, confidently right or confidently wrong, score near zero,
while instances the model keeps changing its mind about score high.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

HISTORY_CAPACITY = 10


@dataclass
class MetricConfig:
    """Knobs for turning raw variances into rewards and loss weights."""

    temperature: float = 1.0
    reward_scale: float = 4.0
    loss_weight_floor: float = 1e-3

    def __post_init__(self) -> None:
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")
        if self.reward_scale <= 0.0:
            raise ValueError("reward_scale must be positive")
        if self.loss_weight_floor <= 0.0:
            raise ValueError("loss_weight_floor must be positive")


@dataclass
class PredictionHistory:
    """Bounded record of target-class probabilities for one instance."""

    values: deque = field(default_factory=lambda: deque(maxlen=HISTORY_CAPACITY))
    observed: int = 0

    def __len__(self) -> int:
        return len(self.values)


def record_prediction(history: PredictionHistory, probability: float) -> PredictionHistory:
    """Append one probability, evicting the oldest once the buffer is full."""
    p = float(probability)
    if not 0.0 <= p <= 1.0:
        raise ValueError("probability must lie in [0, 1]")
    history.values.append(p)
    history.observed += 1
    return history


def variance_weight(history: PredictionHistory) -> float:
    """Population variance of the buffered probabilities.

    Fewer than two observations give zero; values in [0, 1] bound the
    result by 0.25.
    """
    n = len(history.values)
    if n < 2:
        return 0.0
    vals = history.values
    mean = sum(vals) / n
    return sum((v - mean) ** 2 for v in vals) / n


def reward_from_weight(weight: float, config: MetricConfig) -> float:
    """Scale a variance weight into a bandit reward, clipped to [0, 1]."""
    if weight < 0.0:
        raise ValueError("weight must be non-negative")
    return min(1.0, config.reward_scale * weight)


def boltzmann_pmf(weights: Sequence[float], temperature: float) -> np.ndarray:
    """Softmax of ``weights / temperature`` with max-subtraction for stability."""
    if temperature <= 0.0:
        raise ValueError("temperature must be positive")
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a non-empty 1-d vector")
    if not np.isfinite(w).all():
        raise ValueError("weights must be finite")
    z = w / temperature
    e = np.exp(z - z.max())
    return e / e.sum()


def active_bias_loss_weights(variances: Iterable[float], floor: float) -> np.ndarray:
    """Normalised per-instance loss weights ``(v + floor) / mean(v + floor)``.

    The mean of the returned vector is exactly one, so re-weighting does
    not change the scale of the batch loss.
    """
    if floor <= 0.0:
        raise ValueError("floor must be positive")
    v = np.asarray(list(variances), dtype=np.float64)
    if v.size == 0:
        raise ValueError("variances must be non-empty")
    if (v < 0.0).any():
        raise ValueError("variances must be non-negative")
    shifted = v + floor
    return shifted / shifted.mean()
