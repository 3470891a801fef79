"""Experiment configuration: a flat dotted key/value text format.

One ``section.key = value`` pair per line, ``#`` starts a comment and
blank lines are skipped. Every key maps onto one field of
``ExperimentConfig``; unknown keys are an error so typos fail loudly.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields
from pathlib import Path

SAMPLER_KINDS = ("uniform", "active_bias", "exp3", "fpl")
DATASET_KINDS = ("blobs", "csv")
FAMILIES = ("frechet", "exponential")


@dataclass
class ExperimentConfig:
    dataset_kind: str = "blobs"
    dataset_size: int = 4000
    dataset_features: int = 20
    dataset_classes: int = 10
    dataset_spread: float = 0.6
    dataset_csv_path: str = ""
    dataset_csv_header: bool = False
    dataset_test_fraction: float = 0.5

    noise_ratios: tuple[float, ...] = (0.4,)

    sampler_kind: str = "fpl"
    sampler_eta: float = 18.0
    sampler_gamma: float = 0.1
    sampler_beta: float = 20.0
    sampler_shape: float = 0.45
    sampler_family: str = "frechet"
    sampler_gr_cap: int = 1000
    sampler_temperature: float = 1.0
    sampler_reward_scale: float = 4.0
    sampler_loss_floor: float = 1e-3

    trainer_hidden: int = 64
    trainer_learning_rate: float = 0.1
    trainer_momentum: float = 0.9
    trainer_decay_factor: float = 0.1
    trainer_decay_at: tuple[int, ...] = ()

    run_batch_size: int = 32
    run_epochs: int = 60
    run_warmup_epochs: int = 1
    run_seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    run_iterations_per_epoch: int = 0
    run_out_dir: str = "runs"
    run_log_iterations: bool = False
    run_record_timings: bool = False

    def validate(self) -> None:
        if self.dataset_kind not in DATASET_KINDS:
            raise ValueError(f"dataset.kind must be one of {DATASET_KINDS}")
        if self.dataset_kind == "csv" and not self.dataset_csv_path:
            raise ValueError("dataset.csv_path required when dataset.kind = csv")
        if self.dataset_kind == "blobs":
            if self.dataset_size < 2:
                raise ValueError("dataset.size must be at least 2")
            if self.dataset_features < 1:
                raise ValueError("dataset.features must be positive")
            if self.dataset_classes < 2:
                raise ValueError("dataset.classes must be at least 2")
            if self.dataset_spread < 0.0:
                raise ValueError("dataset.spread must be non-negative")
        if not 0.0 < self.dataset_test_fraction < 1.0:
            raise ValueError("dataset.test_fraction must lie in (0, 1)")
        if not self.noise_ratios:
            raise ValueError("noise.ratios must be non-empty")
        for r in self.noise_ratios:
            if not 0.0 <= r < 1.0:
                raise ValueError("noise ratios must lie in [0, 1)")
        if self.sampler_kind not in SAMPLER_KINDS:
            raise ValueError(f"sampler.kind must be one of {SAMPLER_KINDS}")
        if self.sampler_eta <= 0.0:
            raise ValueError("sampler.eta must be positive")
        if not 0.0 <= self.sampler_gamma <= 1.0:
            raise ValueError("sampler.gamma must lie in [0, 1]")
        if self.sampler_beta <= 0.0:
            raise ValueError("sampler.beta must be positive")
        if self.sampler_shape <= 0.0:
            raise ValueError("sampler.shape must be positive")
        if self.sampler_family not in FAMILIES:
            raise ValueError(f"sampler.family must be one of {FAMILIES}")
        if self.sampler_gr_cap < 1:
            raise ValueError("sampler.gr_cap must be at least 1")
        if self.sampler_temperature <= 0.0:
            raise ValueError("sampler.temperature must be positive")
        if self.sampler_reward_scale <= 0.0:
            raise ValueError("sampler.reward_scale must be positive")
        if self.sampler_loss_floor <= 0.0:
            raise ValueError("sampler.loss_floor must be positive")
        if self.trainer_hidden < 1:
            raise ValueError("trainer.hidden must be positive")
        if self.trainer_learning_rate <= 0.0:
            raise ValueError("trainer.learning_rate must be positive")
        if not 0.0 <= self.trainer_momentum < 1.0:
            raise ValueError("trainer.momentum must lie in [0, 1)")
        if not 0.0 < self.trainer_decay_factor <= 1.0:
            raise ValueError("trainer.decay_factor must lie in (0, 1]")
        if self.run_batch_size < 1:
            raise ValueError("run.batch_size must be positive")
        if self.run_epochs < 0:
            raise ValueError("run.epochs must be non-negative")
        if self.run_warmup_epochs < 0:
            raise ValueError("run.warmup_epochs must be non-negative")
        if not self.run_seeds:
            raise ValueError("run.seeds must be non-empty")
        if self.run_iterations_per_epoch < 0:
            raise ValueError("run.iterations_per_epoch must be non-negative")


def _field_map() -> dict[str, object]:
    return {f.name.replace("_", ".", 1): f for f in fields(ExperimentConfig)}


def _parse_value(text: str, target):
    kind = target.type if isinstance(target.type, str) else str(target.type)
    if kind == "bool":
        low = text.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    if kind.startswith("tuple[int"):
        return tuple(int(p) for p in text.split(",") if p.strip()) if text else ()
    if kind.startswith("tuple[float"):
        return tuple(float(p) for p in text.split(",") if p.strip()) if text else ()
    return text


def parse_config_text(text: str, source: str = "<string>") -> ExperimentConfig:
    mapping = _field_map()
    config = ExperimentConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source} line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in mapping:
            raise ValueError(f"{source} line {lineno}: unknown key {key!r}")
        f = mapping[key]
        try:
            parsed = _parse_value(value, f)
        except ValueError as exc:
            raise ValueError(f"{source} line {lineno}: bad value for {key}: {exc}") from exc
        setattr(config, f.name, parsed)
    config.validate()
    return config


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config_text(path.read_text(), source=str(path))


def serialize_config(config: ExperimentConfig) -> str:
    """Canonical text form: one dotted key per line in declaration order."""
    lines = []
    for f in fields(ExperimentConfig):
        value = getattr(config, f.name)
        if isinstance(value, tuple):
            text = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
        elif isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        lines.append(f"{f.name.replace('_', '.', 1)} = {text}")
    return "\n".join(lines) + "\n"


def config_hash(config: ExperimentConfig) -> str:
    """Stable hex digest of the canonical serialization."""
    return hashlib.sha256(serialize_config(config).encode()).hexdigest()[:16]
