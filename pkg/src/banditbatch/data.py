"""Dataset construction, CSV ingestion, splitting and label corruption.

Datasets are stored column-wise (features, observed labels, true labels,
stable instance indices). Label noise flips the observed label of an
exact count of instances to a uniformly chosen different class while the
true labels stay untouched, and the corrupted rows can be written to a
line-delimited manifest for later analysis.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class ParseError(ValueError):
    """Raised when a CSV file cannot be interpreted; names the offending row."""


class DatasetStateError(RuntimeError):
    """Raised when an operation is applied to a dataset in the wrong state."""


@dataclass(frozen=True)
class Instance:
    """One labelled example with its stable index."""

    index: int
    features: np.ndarray
    observed_label: int
    true_label: int


@dataclass
class Dataset:
    """Column-wise container of labelled instances."""

    features: np.ndarray
    observed_labels: np.ndarray
    true_labels: np.ndarray
    indices: np.ndarray
    n_classes: int

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        self.observed_labels = np.asarray(self.observed_labels, dtype=np.int64)
        self.true_labels = np.asarray(self.true_labels, dtype=np.int64)
        self.indices = np.asarray(self.indices, dtype=np.int64)
        n = self.features.shape[0]
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-d array")
        if not (self.observed_labels.size == self.true_labels.size == self.indices.size == n):
            raise ValueError("column lengths disagree")
        if self.n_classes < 2:
            raise ValueError("need at least two classes")
        if np.unique(self.indices).size != n:
            raise ValueError("instance indices must be unique")

    def __len__(self) -> int:
        return int(self.features.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.features.shape[1])

    @property
    def is_clean(self) -> bool:
        return bool((self.observed_labels == self.true_labels).all())

    def instance(self, position: int) -> Instance:
        return Instance(
            index=int(self.indices[position]),
            features=self.features[position],
            observed_label=int(self.observed_labels[position]),
            true_label=int(self.true_labels[position]),
        )

    def take(self, positions: np.ndarray) -> "Dataset":
        """New dataset holding the given row positions, original indices kept."""
        pos = np.asarray(positions, dtype=np.int64)
        return Dataset(
            self.features[pos].copy(),
            self.observed_labels[pos].copy(),
            self.true_labels[pos].copy(),
            self.indices[pos].copy(),
            self.n_classes,
        )


@dataclass(frozen=True)
class NoiseSpec:
    """Symmetric label-noise parameters: flip an exact share of instances."""

    ratio: float
    seed: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.ratio < 1.0:
            raise ValueError("ratio must lie in [0, 1)")


def generate_blobs(
    n: int,
    n_features: int,
    n_classes: int,
    spread: float,
    seed,
) -> Dataset:
    """Gaussian blobs with class means on the unit sphere.

    Class sizes differ by at most one; ``spread`` is the isotropic
    standard deviation around each mean (zero collapses every class onto
    its mean). Deterministic in ``seed``.
    """
    if n_classes < 2:
        raise ValueError("need at least two classes")
    if n < n_classes:
        raise ValueError("need at least one instance per class")
    if n_features < 1:
        raise ValueError("need at least one feature")
    if spread < 0.0:
        raise ValueError("spread must be non-negative")
    rng = np.random.default_rng(seed)
    means = rng.standard_normal((n_classes, n_features))
    norms = np.linalg.norm(means, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    means /= norms
    labels = np.arange(n, dtype=np.int64) % n_classes
    features = means[labels]
    if spread > 0.0:
        features = features + spread * rng.standard_normal((n, n_features))
    else:
        features = features.copy()
    return Dataset(features, labels.copy(), labels.copy(), np.arange(n), n_classes)


def load_csv(path, has_header: bool = False) -> Dataset:
    """Read instances from a CSV file of feature columns plus a final label.

    Feature width is taken from the first data row; ragged rows,
    non-numeric cells and labels that are negative or not integers raise
    ``ParseError`` naming the physical row number (1-based).
    """
    rows: list[tuple[int, list[str]]] = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if has_header and lineno == 1:
                continue
            if not row:
                continue
            rows.append((lineno, row))
    if not rows:
        raise ParseError(f"{path}: no data rows")
    width = len(rows[0][1])
    if width < 2:
        raise ParseError(f"{path} row {rows[0][0]}: need at least one feature and a label")
    features = np.empty((len(rows), width - 1), dtype=np.float64)
    labels = np.empty(len(rows), dtype=np.int64)
    for out, (lineno, row) in enumerate(rows):
        if len(row) != width:
            raise ParseError(f"{path} row {lineno}: expected {width} columns, found {len(row)}")
        try:
            features[out] = [float(cell) for cell in row[:-1]]
        except ValueError as exc:
            raise ParseError(f"{path} row {lineno}: non-numeric feature cell") from exc
        try:
            label = float(row[-1])
        except ValueError as exc:
            raise ParseError(f"{path} row {lineno}: non-numeric label") from exc
        if label != int(label):
            raise ParseError(f"{path} row {lineno}: label must be an integer")
        if label < 0:
            raise ParseError(f"{path} row {lineno}: label must be non-negative")
        labels[out] = int(label)
    n_classes = int(labels.max()) + 1
    if n_classes < 2:
        n_classes = 2
    return Dataset(features, labels.copy(), labels.copy(), np.arange(len(rows)), n_classes)


def split(dataset: Dataset, test_fraction: float, seed) -> tuple[Dataset, Dataset]:
    """Shuffle-split into (train, test); original indices are preserved.

    The two parts are disjoint and together exhaust the input. Pure:
    the input dataset is not modified.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie strictly between 0 and 1")
    n = len(dataset)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_test = int(round(test_fraction * n))
    test_pos = np.sort(perm[:n_test])
    train_pos = np.sort(perm[n_test:])
    return dataset.take(train_pos), dataset.take(test_pos)


def inject_symmetric_noise(dataset: Dataset, spec: NoiseSpec) -> Dataset:
    """Flip the observed labels of exactly ``round(ratio * N)`` instances.

    Each flipped instance gets a label drawn uniformly from the other
    ``C - 1`` classes; true labels are untouched. Applying noise to a
    dataset that is already corrupted raises ``DatasetStateError``.
    Returns a new dataset.
    """
    if not dataset.is_clean:
        raise DatasetStateError("dataset already carries label noise")
    n = len(dataset)
    k = int(round(spec.ratio * n))
    out = dataset.take(np.arange(n))
    if k == 0:
        return out
    rng = np.random.default_rng(spec.seed)
    positions = rng.choice(n, size=k, replace=False)
    offsets = rng.integers(1, dataset.n_classes, size=k)
    out.observed_labels[positions] = (
        out.true_labels[positions] + offsets
    ) % dataset.n_classes
    return out


def write_noise_manifest(dataset: Dataset, path) -> int:
    """Write one JSON line per corrupted instance; returns the count."""
    corrupted = np.flatnonzero(dataset.observed_labels != dataset.true_labels)
    path = Path(path)
    with open(path, "w") as fh:
        for pos in corrupted:
            fh.write(
                json.dumps(
                    {
                        "index": int(dataset.indices[pos]),
                        "true_label": int(dataset.true_labels[pos]),
                        "observed_label": int(dataset.observed_labels[pos]),
                    }
                )
                + "\n"
            )
    return int(corrupted.size)


def read_noise_manifest(path) -> dict[int, tuple[int, int]]:
    """Read a manifest back as ``{index: (true_label, observed_label)}``."""
    out: dict[int, tuple[int, int]] = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            out[int(rec["index"])] = (int(rec["true_label"]), int(rec["observed_label"]))
    return out
