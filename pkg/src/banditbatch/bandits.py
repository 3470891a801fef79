"""Adversarial bandit policies used for minibatch selection.

Two policies over a fixed pool of arms:

* an exponential-weights learner with a uniform exploration floor,
  extended from single draws to batches by sequential sampling without
  replacement, and
* a perturbed-leader policy that picks the ``m`` arms maximising a
  perturbed cumulative-reward vector, with geometric re-sampling to
  estimate the inverse inclusion probability of each selected arm.

Both keep their state in small dataclasses; every operation that draws
randomness takes an explicit ``numpy.random.Generator`` so identical
seeds reproduce identical trajectories bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

FRECHET = "frechet"
EXPONENTIAL = "exponential"


@dataclass(frozen=True)
class BatchSelection:
    """An ordered batch of distinct arm indices chosen in one round."""

    indices: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.indices) == 0:
            raise ValueError("selection must contain at least one index")
        if any(i < 0 for i in self.indices):
            raise ValueError("selection indices must be non-negative")
        if len(set(self.indices)) != len(self.indices):
            raise ValueError("selection indices must be distinct")

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=np.int64)


@dataclass
class Exp3State:
    """Exponential-weights state over a fixed set of arms.

    Weights live in log space; after every update the vector is shifted
    so its maximum is zero, which keeps ``exp`` in range regardless of
    how large the importance-weighted increments grow.
    """

    log_weights: np.ndarray
    gamma: float
    eta: float
    round: int = 0

    def __post_init__(self) -> None:
        self.log_weights = np.asarray(self.log_weights, dtype=np.float64)
        if self.log_weights.ndim != 1 or self.log_weights.size == 0:
            raise ValueError("log_weights must be a non-empty 1-d vector")
        if not np.isfinite(self.log_weights).all():
            raise ValueError("log_weights must be finite")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.eta <= 0.0:
            raise ValueError("eta must be positive")
        if self.round < 0:
            raise ValueError("round must be non-negative")

    @property
    def num_arms(self) -> int:
        return int(self.log_weights.size)

    @classmethod
    def create(cls, num_arms: int, gamma: float = 0.1, eta: float = 0.3) -> "Exp3State":
        if num_arms < 1:
            raise ValueError("need at least one arm")
        return cls(np.zeros(num_arms), gamma, eta)


def exp3_pmf(state: Exp3State) -> np.ndarray:
    """Sampling distribution: normalised weights mixed with a uniform floor.

    Every entry is at least ``gamma / K`` and the vector sums to one.
    """
    w = np.exp(state.log_weights - state.log_weights.max())
    q = w / w.sum()
    return (1.0 - state.gamma) * q + state.gamma / state.num_arms


def exp3_sample_batch(state: Exp3State, batch_size: int, rng: np.random.Generator) -> BatchSelection:
    """Draw ``batch_size`` distinct arms sequentially without replacement.

    Each draw uses the current distribution restricted to the arms not
    yet taken (renormalised), so the returned tuple is in draw order.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    if batch_size > state.num_arms:
        raise ValueError("batch_size exceeds the number of arms")
    probs = exp3_pmf(state).copy()
    picks: list[int] = []
    for _ in range(batch_size):
        candidates = np.flatnonzero(probs > 0.0)
        cum = np.cumsum(probs[candidates])
        u = rng.random() * cum[-1]
        k = int(np.searchsorted(cum, u, side="right"))
        k = min(k, candidates.size - 1)
        j = int(candidates[k])
        picks.append(j)
        probs[j] = 0.0
    return BatchSelection(tuple(picks))


def _check_reward_keys(selection: BatchSelection, rewards: Mapping[int, float], what: str) -> None:
    if set(rewards.keys()) != set(selection.indices):
        raise ValueError(f"{what} keys must match the selection exactly")


def exp3_update(
    state: Exp3State,
    selection: BatchSelection,
    rewards: Mapping[int, float],
    pmf: np.ndarray,
) -> Exp3State:
    """Apply importance-weighted reward estimates for the selected arms.

    Each selected arm ``j`` gains ``eta * rewards[j] / pmf[j]`` in log
    space (unselected arms implicitly receive a zero estimate); the
    vector is then re-shifted so its maximum is zero.
    """
    _check_reward_keys(selection, rewards, "rewards")
    pmf = np.asarray(pmf, dtype=np.float64)
    if pmf.shape != (state.num_arms,):
        raise ValueError("pmf length must match the number of arms")
    lw = state.log_weights.copy()
    for j in selection.indices:
        r = float(rewards[j])
        if not 0.0 <= r <= 1.0:
            raise ValueError(f"reward for arm {j} outside [0, 1]")
        lw[j] += state.eta * r / pmf[j]
    lw -= lw.max()
    return Exp3State(lw, state.gamma, state.eta, state.round + 1)


@dataclass(frozen=True)
class PerturbationSpec:
    """Distribution of the additive perturbation used by the leader policy."""

    family: str = FRECHET
    shape: float = 0.45
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.family not in (FRECHET, EXPONENTIAL):
            raise ValueError(f"unknown perturbation family {self.family!r}")
        if self.shape <= 0.0:
            raise ValueError("shape must be positive")
        if self.scale <= 0.0:
            raise ValueError("scale must be positive")


def frechet_ppf(u, shape: float, scale: float):
    """Inverse CDF of the Frechet distribution: scale * (-ln u) ** (-1/shape)."""
    return scale * (-np.log(u)) ** (-1.0 / shape)


def exponential_ppf(u, scale: float):
    """Inverse survival transform of the exponential: -scale * ln u."""
    return -scale * np.log(u)


def sample_perturbation(spec: PerturbationSpec, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` i.i.d. perturbations; all values are strictly positive."""
    if count < 1:
        raise ValueError("count must be positive")
    u = rng.random(count)
    # keep draws strictly inside (0, 1) so the transforms stay finite
    u = np.maximum(u, np.finfo(np.float64).tiny)
    if spec.family == FRECHET:
        return frechet_ppf(u, spec.shape, spec.scale)
    return exponential_ppf(u, spec.scale)


@dataclass
class FplState:
    """Perturbed-leader state: cumulative reward estimates per arm."""

    weights: np.ndarray
    eta: float
    perturbation: PerturbationSpec
    gr_cap: int
    batch_size: int
    round: int = 0

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 1 or self.weights.size == 0:
            raise ValueError("weights must be a non-empty 1-d vector")
        if not np.isfinite(self.weights).all() or (self.weights < 0.0).any():
            raise ValueError("weights must be finite and non-negative")
        if self.eta <= 0.0:
            raise ValueError("eta must be positive")
        if self.gr_cap < 1:
            raise ValueError("gr_cap must be at least 1")
        if not 1 <= self.batch_size <= self.weights.size:
            raise ValueError("batch_size must lie in [1, number of arms]")
        if self.round < 0:
            raise ValueError("round must be non-negative")

    @property
    def num_arms(self) -> int:
        return int(self.weights.size)

    @classmethod
    def create(
        cls,
        num_arms: int,
        batch_size: int,
        eta: float = 18.0,
        perturbation: PerturbationSpec = PerturbationSpec(FRECHET, 0.45, 20.0),
        gr_cap: int = 1000,
    ) -> "FplState":
        if num_arms < 1:
            raise ValueError("need at least one arm")
        return cls(np.zeros(num_arms), eta, perturbation, gr_cap, batch_size)


def top_m_indices(scores: np.ndarray, m: int) -> np.ndarray:
    """Indices of the m largest entries, ties resolved toward lower indices."""
    order = np.argsort(-scores, kind="stable")
    return order[:m]


def fpl_select_batch(state: FplState, perturbations: np.ndarray) -> BatchSelection:
    """Pick the batch maximising ``eta * weights + perturbations``.

    Equivalent to brute force over all index subsets of the batch size;
    returned in descending score order.
    """
    rho = np.asarray(perturbations, dtype=np.float64)
    if rho.shape != (state.num_arms,):
        raise ValueError("perturbation length must match the number of arms")
    scores = state.eta * state.weights + rho
    top = top_m_indices(scores, state.batch_size)
    return BatchSelection(tuple(int(i) for i in top))


def resample_counts(
    state: FplState,
    selection: BatchSelection,
    rng: np.random.Generator,
    trials: int = 1,
) -> np.ndarray:
    """Geometric re-sampling counts for every selected arm.

    Runs the shared re-draw loop: each iteration draws one fresh
    perturbation vector, recomputes the top-m set under the same weights,
    and records the iteration index at which each selected arm first
    re-occurs. Arms that never re-occur within ``gr_cap`` iterations get
    the cap. Vectorised over ``trials`` independent repetitions (each
    repetition replays the loop with its own draws); returns an int
    array of shape ``(trials, len(selection))``.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    sel = selection.as_array()
    d = state.num_arms
    m = state.batch_size
    base = state.eta * state.weights
    counts = np.full((trials, sel.size), state.gr_cap, dtype=np.int64)
    resolved = np.zeros((trials, sel.size), dtype=bool)
    active = np.arange(trials)
    for k in range(1, state.gr_cap + 1):
        a = active.size
        rho = sample_perturbation(state.perturbation, a * d, rng).reshape(a, d)
        scores = base[np.newaxis, :] + rho
        if m == 1:
            top = np.argmax(scores, axis=1)
            hits = top[:, np.newaxis] == sel[np.newaxis, :]
        else:
            top = np.argpartition(scores, d - m, axis=1)[:, d - m:]
            member = np.zeros((a, d), dtype=bool)
            member[np.arange(a)[:, np.newaxis], top] = True
            hits = member[:, sel]
        res = resolved[active]
        newly = hits & ~res
        rows, cols = np.nonzero(newly)
        counts[active[rows], cols] = k
        res |= hits
        resolved[active] = res
        active = active[~res.all(axis=1)]
        if active.size == 0:
            break
    return counts


def geometric_resample(
    state: FplState,
    selection: BatchSelection,
    rng: np.random.Generator,
) -> dict[int, int]:
    """Map each selected arm to its first re-occurrence iteration (capped)."""
    counts = resample_counts(state, selection, rng, trials=1)[0]
    return {int(i): int(c) for i, c in zip(selection.indices, counts)}


def fpl_update(
    state: FplState,
    selection: BatchSelection,
    rewards: Mapping[int, float],
    sigmas: Mapping[int, int],
) -> FplState:
    """Add ``min(gr_cap, sigma) * reward`` to every selected arm's weight."""
    _check_reward_keys(selection, rewards, "rewards")
    _check_reward_keys(selection, sigmas, "sigmas")
    w = state.weights.copy()
    for i in selection.indices:
        r = float(rewards[i])
        if not 0.0 <= r <= 1.0:
            raise ValueError(f"reward for arm {i} outside [0, 1]")
        s = int(sigmas[i])
        if s < 1:
            raise ValueError(f"sigma for arm {i} must be at least 1")
        w[i] += min(state.gr_cap, s) * r
    return FplState(
        w, state.eta, state.perturbation, state.gr_cap, state.batch_size, state.round + 1
    )
