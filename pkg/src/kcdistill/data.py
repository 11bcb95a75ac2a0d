"""Synthetic class-blob datasets and CSV ingestion.

Generated features are standardized per dimension against the train split so
models see zero-mean unit-variance inputs; the written CSVs carry the
standardized values, so a reload never re-standardizes.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

CSV_FLOAT_FORMAT = "%.17g"
TRAIN_FILE = "train.csv"
TEST_FILE = "test.csv"


class DataFormatError(ValueError):
    """A data file could not be parsed; message carries the line number."""


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    class_count: int
    train_indices: np.ndarray
    test_indices: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.train_indices = np.asarray(self.train_indices, dtype=np.int64)
        self.test_indices = np.asarray(self.test_indices, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.size:
            raise ValueError("features must be N x D with one label per row")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ValueError("labels must lie in [0, class_count)")
        if np.intersect1d(self.train_indices, self.test_indices).size:
            raise ValueError("train and test splits overlap")
        if self.train_indices.size + self.test_indices.size != self.labels.size:
            raise ValueError("splits do not cover the dataset")

    @property
    def n(self) -> int:
        return int(self.labels.size)

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def train_features(self) -> np.ndarray:
        return self.features[self.train_indices]

    @property
    def train_labels(self) -> np.ndarray:
        return self.labels[self.train_indices]

    @property
    def test_features(self) -> np.ndarray:
        return self.features[self.test_indices]

    @property
    def test_labels(self) -> np.ndarray:
        return self.labels[self.test_indices]


def gen_gaussian_mixture(classes: int, dims: int, n_per_class: int, spread: float,
                         seed: int) -> Dataset:
    """Isotropic Gaussian blobs at seeded random centers, 80/20 split.

    Split membership comes from a seeded shuffle; the stored index arrays are
    sorted so downstream sample ordering is canonical.
    """
    if classes < 2:
        raise ValueError(f"need at least 2 classes, got {classes}")
    if dims < 1 or n_per_class < 1:
        raise ValueError("dims and n_per_class must be positive")
    if spread < 0.0:
        raise ValueError("spread must be >= 0")
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, 1.0, size=(classes, dims))
    features = np.concatenate(
        [centers[c] + spread * rng.standard_normal((n_per_class, dims)) for c in range(classes)]
    )
    labels = np.repeat(np.arange(classes, dtype=np.int64), n_per_class)
    n = classes * n_per_class
    perm = rng.permutation(n)
    n_train = int(round(0.8 * n))
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])

    mu = features[train_idx].mean(axis=0)
    sigma = features[train_idx].std(axis=0)
    sigma = np.where(sigma < 1e-12, 1.0, sigma)
    features = (features - mu) / sigma
    return Dataset(features, labels, classes, train_idx, test_idx)


def save_csv(path, features: np.ndarray, labels: np.ndarray) -> None:
    """Rows are f0..f{D-1},label with floats at 17 significant digits."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    dim = features.shape[1]
    header = ",".join([f"f{i}" for i in range(dim)] + ["label"])
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row, lab in zip(features, labels):
            cells = [CSV_FLOAT_FORMAT % v for v in row]
            fh.write(",".join(cells + [str(int(lab))]) + "\n")


def load_csv(path, class_count: int | None = None) -> Dataset:
    """Parse one CSV into a Dataset (all rows tagged train, row order kept)."""
    path = Path(path)
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataFormatError(f"{path}: empty dataset")
    header = lines[0].split(",")
    if header[-1] != "label" or any(h != f"f{i}" for i, h in enumerate(header[:-1])):
        raise DataFormatError(f"{path}: line 1: bad header {lines[0]!r}")
    dim = len(header) - 1
    rows, labels = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != dim + 1:
            raise DataFormatError(
                f"{path}: line {lineno}: expected {dim + 1} cells, got {len(cells)}"
            )
        try:
            rows.append([float(c) for c in cells[:-1]])
        except ValueError:
            raise DataFormatError(f"{path}: line {lineno}: non-numeric feature cell") from None
        try:
            label = int(cells[-1])
        except ValueError:
            raise DataFormatError(f"{path}: line {lineno}: non-integer label {cells[-1]!r}") from None
        if label < 0 or (class_count is not None and label >= class_count):
            raise DataFormatError(f"{path}: line {lineno}: unknown label value {label}")
        labels.append(label)
    if not rows:
        raise DataFormatError(f"{path}: empty dataset")
    features = np.array(rows, dtype=np.float64)
    labels = np.array(labels, dtype=np.int64)
    c = class_count if class_count is not None else int(labels.max()) + 1
    return Dataset(features, labels, c, np.arange(labels.size), np.empty(0, dtype=np.int64))


def save_split_dir(directory, dataset: Dataset) -> None:
    """Persist a dataset as train.csv + test.csv under a directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_csv(directory / TRAIN_FILE, dataset.train_features, dataset.train_labels)
    save_csv(directory / TEST_FILE, dataset.test_features, dataset.test_labels)


def load_split_dir(directory) -> Dataset:
    """Load train.csv + test.csv back into one Dataset (train rows first)."""
    directory = Path(directory)
    train = load_csv(directory / TRAIN_FILE)
    test = load_csv(directory / TEST_FILE)
    if train.dim != test.dim:
        raise DataFormatError(
            f"{directory}: train/test dimension mismatch ({train.dim} vs {test.dim})"
        )
    features = np.concatenate([train.features, test.features])
    labels = np.concatenate([train.labels, test.labels])
    classes = int(labels.max()) + 1
    return Dataset(
        features, labels, classes,
        np.arange(train.n), np.arange(train.n, train.n + test.n),
    )
