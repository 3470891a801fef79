"""Experiment orchestration: datasets, samplers, training loop, records.

A run is one (sampler, noise ratio, seed) triple. Every run writes a
line-delimited record file (metadata first, then per-epoch records and,
optionally, per-iteration records) plus a noise manifest listing the
corrupted instances. All randomness flows from the run seed through
named substreams, so repeating a run reproduces its records byte for
byte. Wall-clock timings, which can never be reproducible, go to an
opt-in sidecar file instead of the record stream.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analysis import weight_entropy
from .bandits import (
    BatchSelection,
    Exp3State,
    FplState,
    PerturbationSpec,
    exp3_pmf,
    exp3_sample_batch,
    exp3_update,
    fpl_select_batch,
    fpl_update,
    geometric_resample,
    sample_perturbation,
)
from .config import ExperimentConfig, config_hash
from .data import (
    Dataset,
    NoiseSpec,
    generate_blobs,
    inject_symmetric_noise,
    load_csv,
    split,
    write_noise_manifest,
)
from .metrics import (
    MetricConfig,
    PredictionHistory,
    active_bias_loss_weights,
    record_prediction,
    reward_from_weight,
    variance_weight,
)
from .trainer import (
    OptimizerState,
    TrainingDiverged,
    evaluate,
    init_model,
    loss_and_grads,
    sgd_step,
)

RECORD_FORMAT = "banditbatch-run"
RECORD_SCHEMA = 1


class _Sweep:
    """Uniform batches without replacement: consume shuffled permutations.

    When a permutation has fewer than ``batch_size`` entries left, the
    leftovers are topped up with a uniform draw from the other
    instances, and the next batch starts a fresh permutation. Every
    instance therefore appears at least once per ``ceil(n / batch_size)``
    batches.
    """

    def __init__(self, n: int, batch_size: int, rng: np.random.Generator) -> None:
        self.n = n
        self.batch_size = batch_size
        self.rng = rng
        self._perm = rng.permutation(n)
        self._pos = 0

    def next_batch(self) -> BatchSelection:
        m = self.batch_size
        remaining = self.n - self._pos
        if remaining >= m:
            chunk = self._perm[self._pos:self._pos + m]
            self._pos += m
            if self._pos == self.n:
                self._perm = self.rng.permutation(self.n)
                self._pos = 0
            return BatchSelection(tuple(int(i) for i in chunk))
        chunk = self._perm[self._pos:]
        others = np.setdiff1d(np.arange(self.n), chunk)
        fill = self.rng.choice(others, size=m - remaining, replace=False)
        self._perm = self.rng.permutation(self.n)
        self._pos = 0
        return BatchSelection(tuple(int(i) for i in chunk) + tuple(int(i) for i in fill))


class _UniformSampler:
    kind = "uniform"
    is_bandit = False
    weighted_loss = False

    def __init__(self, n: int, batch_size: int, rng: np.random.Generator) -> None:
        self._sweep = _Sweep(n, batch_size, rng)

    def select(self, rng: np.random.Generator) -> BatchSelection:
        return self._sweep.next_batch()

    def observe(self, selection, rewards, rng) -> None:
        pass

    def snapshot(self) -> np.ndarray | None:
        return None


class _ActiveBiasSampler(_UniformSampler):
    """Uniform selection; the uncertainty signal enters via loss weights."""

    kind = "active_bias"
    weighted_loss = True


class _Exp3Sampler:
    kind = "exp3"
    is_bandit = True
    weighted_loss = False

    def __init__(self, n: int, batch_size: int, gamma: float, eta: float) -> None:
        self.state = Exp3State.create(n, gamma=gamma, eta=eta)
        self.batch_size = batch_size
        self._last_pmf: np.ndarray | None = None

    def select(self, rng: np.random.Generator) -> BatchSelection:
        self._last_pmf = exp3_pmf(self.state)
        return exp3_sample_batch(self.state, self.batch_size, rng)

    def observe(self, selection, rewards, rng) -> None:
        self.state = exp3_update(self.state, selection, rewards, self._last_pmf)

    def snapshot(self) -> np.ndarray:
        w = np.exp(self.state.log_weights - self.state.log_weights.max())
        return w / w.sum()


class _FplSampler:
    kind = "fpl"
    is_bandit = True
    weighted_loss = False

    def __init__(
        self,
        n: int,
        batch_size: int,
        eta: float,
        perturbation: PerturbationSpec,
        gr_cap: int,
    ) -> None:
        self.state = FplState.create(
            n, batch_size, eta=eta, perturbation=perturbation, gr_cap=gr_cap
        )

    def select(self, rng: np.random.Generator) -> BatchSelection:
        rho = sample_perturbation(self.state.perturbation, self.state.num_arms, rng)
        return fpl_select_batch(self.state, rho)

    def observe(self, selection, rewards, rng) -> None:
        sigmas = geometric_resample(self.state, selection, rng)
        self.state = fpl_update(self.state, selection, rewards, sigmas)

    def snapshot(self) -> np.ndarray:
        return self.state.weights.copy()


def _build_sampler(config: ExperimentConfig, n_train: int, rng: np.random.Generator):
    kind = config.sampler_kind
    m = config.run_batch_size
    if kind == "uniform":
        return _UniformSampler(n_train, m, rng)
    if kind == "active_bias":
        return _ActiveBiasSampler(n_train, m, rng)
    if kind == "exp3":
        return _Exp3Sampler(n_train, m, config.sampler_gamma, config.sampler_eta)
    if kind == "fpl":
        spec = PerturbationSpec(config.sampler_family, config.sampler_shape, config.sampler_beta)
        return _FplSampler(n_train, m, config.sampler_eta, spec, config.sampler_gr_cap)
    raise ValueError(f"unknown sampler kind {kind!r}")


def _build_dataset(config: ExperimentConfig, seed) -> Dataset:
    if config.dataset_kind == "blobs":
        return generate_blobs(
            config.dataset_size,
            config.dataset_features,
            config.dataset_classes,
            config.dataset_spread,
            seed,
        )
    return load_csv(config.dataset_csv_path, has_header=config.dataset_csv_header)


@dataclass
class RunResult:
    """In-memory product of one run, before anything touches disk."""

    sampler: str
    noise_ratio: float
    seed: int
    record_lines: list[str]
    manifest_lines: list[str]
    timings: list[tuple[int, float]]
    ok: bool
    last_error: float | None


def run_seed(config: ExperimentConfig, seed: int, noise_ratio: float | None = None) -> RunResult:
    """Execute one run and return its record stream.

    Dataset construction, splitting, noise, model init and the training
    loop each draw from their own substream of ``seed``, so results for
    a given seed are identical across sampler kinds (same data, same
    initial model) and across repetitions.
    """
    config.validate()
    ratio = config.noise_ratios[0] if noise_ratio is None else float(noise_ratio)
    ss = np.random.SeedSequence(seed)
    data_ss, split_ss, noise_ss, model_ss, loop_ss = ss.spawn(5)

    full = _build_dataset(config, data_ss)
    train, test = split(full, config.dataset_test_fraction, split_ss)
    noise_seed = int(noise_ss.generate_state(1)[0])
    train = inject_symmetric_noise(train, NoiseSpec(ratio, noise_seed))

    n_train = len(train)
    m = config.run_batch_size
    if m > n_train:
        raise ValueError("run.batch_size exceeds the training set size")
    ipe = config.run_iterations_per_epoch or math.ceil(n_train / m)
    warmup = config.run_warmup_epochs if config.run_epochs > 0 else 0
    total_epochs = warmup + config.run_epochs
    total_iters = total_epochs * ipe
    decay_at = config.trainer_decay_at or (
        round(0.5 * total_iters),
        round(0.75 * total_iters),
    )

    model = init_model(
        train.n_features, config.trainer_hidden, train.n_classes, model_ss
    )
    opt = OptimizerState.create(
        model.param_count,
        config.trainer_learning_rate,
        config.trainer_momentum,
        config.trainer_decay_factor,
        tuple(decay_at),
    )
    rng = np.random.default_rng(loop_ss)
    sampler = _build_sampler(config, n_train, rng)
    warmup_sweep = _Sweep(n_train, m, rng) if sampler.is_bandit else None
    mcfg = MetricConfig(
        temperature=config.sampler_temperature,
        reward_scale=config.sampler_reward_scale,
        loss_weight_floor=config.sampler_loss_floor,
    )

    histories = [PredictionHistory() for _ in range(n_train)]
    counts = np.zeros(n_train, dtype=np.int64)
    records: list[str] = []
    manifest_lines = [
        json.dumps(
            {
                "index": int(train.indices[pos]),
                "true_label": int(train.true_labels[pos]),
                "observed_label": int(train.observed_labels[pos]),
            }
        )
        for pos in np.flatnonzero(train.observed_labels != train.true_labels)
    ]
    meta = {
        "record": "meta",
        "format": RECORD_FORMAT,
        "schema": RECORD_SCHEMA,
        "config_hash": config_hash(config),
        "sampler": config.sampler_kind,
        "seed": int(seed),
        "noise_ratio": ratio,
        "n_train": n_train,
        "n_test": len(test),
        "n_features": train.n_features,
        "n_classes": train.n_classes,
        "batch_size": m,
        "epochs": config.run_epochs,
        "warmup_epochs": warmup,
        "iterations_per_epoch": ipe,
        "total_iterations": total_iters,
        "sampler_params": {
            "eta": config.sampler_eta,
            "gamma": config.sampler_gamma,
            "beta": config.sampler_beta,
            "shape": config.sampler_shape,
            "family": config.sampler_family,
            "gr_cap": config.sampler_gr_cap,
            "reward_scale": config.sampler_reward_scale,
            "temperature": config.sampler_temperature,
            "loss_floor": config.sampler_loss_floor,
        },
        "trainer_params": {
            "hidden": config.trainer_hidden,
            "learning_rate": config.trainer_learning_rate,
            "momentum": config.trainer_momentum,
            "decay_factor": config.trainer_decay_factor,
            "decay_at": list(decay_at),
        },
        "train_indices": [int(i) for i in train.indices],
    }
    records.append(json.dumps(meta))

    timings: list[tuple[int, float]] = []
    iteration = 0
    ok = True
    last_error: float | None = None
    try:
        for epoch in range(1, total_epochs + 1):
            phase = "warmup" if epoch <= warmup else "main"
            started = time.perf_counter()
            for _ in range(ipe):
                if phase == "warmup" and warmup_sweep is not None:
                    selection = warmup_sweep.next_batch()
                else:
                    selection = sampler.select(rng)
                idx = selection.as_array()
                feats = train.features[idx]
                labels = train.observed_labels[idx]
                if sampler.weighted_loss:
                    loss_weights = active_bias_loss_weights(
                        [variance_weight(histories[i]) for i in idx],
                        mcfg.loss_weight_floor,
                    )
                else:
                    loss_weights = np.ones(len(idx))
                _, grad, p_target = loss_and_grads(model, feats, labels, loss_weights)
                for i, p in zip(idx, p_target):
                    record_prediction(histories[int(i)], float(p))
                model, opt = sgd_step(model, opt, grad, iteration)
                rewards = {
                    int(i): reward_from_weight(variance_weight(histories[int(i)]), mcfg)
                    for i in idx
                }
                if phase == "main" and sampler.is_bandit:
                    sampler.observe(selection, rewards, rng)
                counts[idx] += 1
                if config.run_log_iterations:
                    rec = {
                        "record": "iteration",
                        "epoch": epoch,
                        "phase": phase,
                        "iteration": iteration,
                        "selected": [int(i) for i in selection.indices],
                        "rewards": [rewards[int(i)] for i in selection.indices],
                    }
                    if sampler.kind == "fpl":
                        rec["weights_positive"] = int(
                            (sampler.state.weights > 0.0).sum()
                        )
                    records.append(json.dumps(rec))
                iteration += 1
            last_error = evaluate(model, test)
            weights = sampler.snapshot()
            record = {
                "record": "epoch",
                "epoch": epoch,
                "phase": phase,
                "test_error": last_error,
                "weight_min": None if weights is None else float(weights.min()),
                "weight_max": None if weights is None else float(weights.max()),
                "weight_entropy": None if weights is None else weight_entropy(weights),
                "selection_counts": counts.tolist(),
            }
            records.append(json.dumps(record))
            timings.append((epoch, time.perf_counter() - started))
    except TrainingDiverged as exc:
        ok = False
        records.append(
            json.dumps(
                {
                    "record": "failure",
                    "epoch": len(timings) + 1,
                    "iteration": iteration,
                    "reason": str(exc),
                }
            )
        )

    return RunResult(
        config.sampler_kind, ratio, int(seed), records, manifest_lines, timings, ok, last_error
    )


def run_name(sampler: str, noise_ratio: float, seed: int) -> str:
    return f"{sampler}_noise{noise_ratio:g}_seed{seed}"


def _write_atomic(path: Path, lines: list[str]) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        for line in lines:
            fh.write(line + "\n")
    os.replace(tmp, path)


def run_experiment(
    config: ExperimentConfig,
    out_dir=None,
    seeds=None,
    echo=None,
) -> list[dict]:
    """Run the full seeds-by-noise-ratios grid, writing one file pair per run.

    Record and manifest files are written atomically once a run
    finishes, so an interrupted experiment leaves only complete files
    behind. A run that fails does not stop the rest; the failure is
    reported in the returned summaries.
    """
    config.validate()
    out = Path(out_dir if out_dir is not None else config.run_out_dir)
    out.mkdir(parents=True, exist_ok=True)
    use_seeds = tuple(seeds) if seeds is not None else config.run_seeds
    summaries: list[dict] = []
    for ratio in config.noise_ratios:
        for seed in use_seeds:
            name = run_name(config.sampler_kind, ratio, seed)
            summary = {
                "name": name,
                "sampler": config.sampler_kind,
                "noise_ratio": ratio,
                "seed": seed,
            }
            try:
                result = run_seed(config, seed, ratio)
            except Exception as exc:  # keep the remaining runs alive
                summary["ok"] = False
                summary["error"] = f"{type(exc).__name__}: {exc}"
                summaries.append(summary)
                if echo:
                    echo(f"run {name} failed: {summary['error']}")
                continue
            _write_atomic(out / f"{name}.jsonl", result.record_lines)
            _write_atomic(out / f"{name}.manifest.jsonl", result.manifest_lines)
            if config.run_record_timings:
                timing_lines = ["epoch,seconds"] + [
                    f"{epoch},{secs:.6f}" for epoch, secs in result.timings
                ]
                _write_atomic(out / f"{name}.timings.csv", timing_lines)
            summary["ok"] = result.ok
            summary["path"] = str(out / f"{name}.jsonl")
            if result.last_error is not None:
                summary["last_error"] = result.last_error
            summaries.append(summary)
            if echo:
                state = "ok" if result.ok else "diverged"
                err = (
                    f" last_error={result.last_error:.4f}"
                    if result.last_error is not None
                    else ""
                )
                echo(f"run {name}: {state}{err}")
    return summaries
