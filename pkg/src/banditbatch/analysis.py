"""Aggregation of run records: intervals, curves, overlays, entropy.

Everything in here consumes the line-delimited record files the harness
writes (plus their noise manifests) and produces plain arrays or rows
ready for CSV/figure emission. Nothing here draws randomness, so output
is deterministic for identical inputs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats as scipy_stats


def confidence_interval(values, confidence: float = 0.95) -> tuple[float, float]:
    """Mean and half-width of a Student-t interval over the values.

    Uses the sample standard deviation (n - 1 denominator); fewer than
    two values raise ``ValueError`` since no interval exists.
    """
    v = np.asarray(list(values), dtype=np.float64)
    n = v.size
    if n < 2:
        raise ValueError("need at least two values for an interval")
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must lie in (0, 1)")
    mean = float(v.mean())
    sd = float(v.std(ddof=1))
    t = float(scipy_stats.t.ppf(0.5 + confidence / 2.0, n - 1))
    return mean, t * sd / math.sqrt(n)


def selection_occurrence_curve(counts) -> np.ndarray:
    """Selection counts sorted in descending order (empty in, empty out)."""
    c = np.asarray(counts)
    return np.sort(c)[::-1].copy()


def mislabeled_fraction_overlay(counts, corrupted, window: int) -> np.ndarray:
    """Sliding-window corrupted fraction along the descending-count order.

    ``counts`` and ``corrupted`` (boolean) are aligned per instance.
    Instances are ranked by count, most-selected first (ties keep the
    lower position first); entry ``i`` of the result is the corrupted
    fraction among ranks ``i .. i + window - 1``. Length is
    ``len(counts) - window + 1``.
    """
    c = np.asarray(counts, dtype=np.float64)
    mask = np.asarray(corrupted, dtype=bool)
    if c.shape != mask.shape or c.ndim != 1:
        raise ValueError("counts and corrupted must be 1-d and aligned")
    if not 1 <= window <= c.size:
        raise ValueError("window must lie in [1, len(counts)]")
    order = np.argsort(-c, kind="stable")
    sorted_mask = mask[order].astype(np.float64)
    kernel = np.ones(window) / window
    return np.convolve(sorted_mask, kernel, mode="valid")


def weight_entropy(weights) -> float:
    """Shannon entropy (nats) of the normalised weights.

    An all-zero vector counts as uniform and returns ``ln N``.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a non-empty 1-d vector")
    if (w < 0.0).any() or not np.isfinite(w).all():
        raise ValueError("weights must be finite and non-negative")
    total = w.sum()
    if total == 0.0:
        return math.log(w.size)
    q = w / total
    q = q[q > 0.0]
    return float(-(q * np.log(q)).sum())


def weight_entropy_series(snapshots) -> list[float]:
    """Entropy of each snapshot in order."""
    return [weight_entropy(s) for s in snapshots]


@dataclass(frozen=True)
class SummaryRow:
    sampler: str
    noise_ratio: float
    n_seeds: int
    best_mean: float
    best_half_width: float | None
    last_mean: float
    last_half_width: float | None


@dataclass(frozen=True)
class SummaryTable:
    rows: tuple[SummaryRow, ...]

    def __post_init__(self) -> None:
        for row in self.rows:
            if row.best_mean > row.last_mean + 1e-12:
                raise ValueError(
                    f"best error above last error for {row.sampler} "
                    f"at ratio {row.noise_ratio}"
                )


@dataclass
class RunData:
    """One parsed run: metadata, epoch records, optional iteration records."""

    path: Path
    meta: dict
    epochs: list[dict]
    iterations: list[dict]
    failure: dict | None
    corrupted_mask: np.ndarray | None

    @property
    def ok(self) -> bool:
        return self.failure is None and bool(self.epochs)

    @property
    def sampler(self) -> str:
        return self.meta["sampler"]

    @property
    def noise_ratio(self) -> float:
        return float(self.meta["noise_ratio"])

    @property
    def seed(self) -> int:
        return int(self.meta["seed"])

    @property
    def last_error(self) -> float:
        return float(self.epochs[-1]["test_error"])

    @property
    def best_error(self) -> float:
        return min(float(e["test_error"]) for e in self.epochs)

    def final_counts(self) -> np.ndarray:
        return np.asarray(self.epochs[-1]["selection_counts"], dtype=np.int64)

    def entropy_series(self) -> list[float | None]:
        return [e.get("weight_entropy") for e in self.epochs]


def manifest_path_for(run_path: Path) -> Path:
    stem = run_path.name
    if stem.endswith(".jsonl"):
        stem = stem[: -len(".jsonl")]
    return run_path.with_name(stem + ".manifest.jsonl")


def load_run(path) -> RunData:
    """Parse one record file plus its sibling noise manifest, if present."""
    path = Path(path)
    meta: dict | None = None
    epochs: list[dict] = []
    iterations: list[dict] = []
    failure: dict | None = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            kind = rec.get("record")
            if kind == "meta":
                meta = rec
            elif kind == "epoch":
                epochs.append(rec)
            elif kind == "iteration":
                iterations.append(rec)
            elif kind == "failure":
                failure = rec
    if meta is None:
        raise ValueError(f"{path}: no metadata record")
    corrupted_mask = None
    mpath = manifest_path_for(path)
    if mpath.exists() and "train_indices" in meta:
        corrupted: set[int] = set()
        with open(mpath) as fh:
            for line in fh:
                line = line.strip()
                if line:
                    corrupted.add(int(json.loads(line)["index"]))
        corrupted_mask = np.asarray(
            [idx in corrupted for idx in meta["train_indices"]], dtype=bool
        )
    return RunData(path, meta, epochs, iterations, failure, corrupted_mask)


def load_runs(directory) -> list[RunData]:
    """Load every run record file in a directory, sorted by file name."""
    directory = Path(directory)
    paths = sorted(
        p for p in directory.glob("*.jsonl") if not p.name.endswith(".manifest.jsonl")
    )
    if not paths:
        raise FileNotFoundError(f"no run record files (*.jsonl) found in {directory}")
    return [load_run(p) for p in paths]


def group_runs(runs) -> dict[tuple[str, float], list[RunData]]:
    """Group completed runs by (sampler, noise ratio), seeds sorted."""
    groups: dict[tuple[str, float], list[RunData]] = {}
    for run in runs:
        if not run.ok:
            continue
        groups.setdefault((run.sampler, run.noise_ratio), []).append(run)
    for key in groups:
        groups[key].sort(key=lambda r: r.seed)
    return groups


def _mean_ci(values) -> tuple[float, float | None]:
    vals = list(values)
    if len(vals) < 2:
        return float(vals[0]), None
    return confidence_interval(vals)


def build_summary(runs) -> SummaryTable:
    """Mean best/last test error with interval half-widths per group."""
    rows = []
    for (sampler, ratio), group in sorted(group_runs(runs).items()):
        best_mean, best_hw = _mean_ci([r.best_error for r in group])
        last_mean, last_hw = _mean_ci([r.last_error for r in group])
        rows.append(
            SummaryRow(sampler, ratio, len(group), best_mean, best_hw, last_mean, last_hw)
        )
    return SummaryTable(tuple(rows))


def default_overlay_window(n_train: int) -> int:
    """Sliding-window width scaled from a reference of 1000 per 50000 instances."""
    return max(1, round(1000 * n_train / 50000))
