"""Synthetic clustered classification data and small deterministic learners.

The generator draws Gaussian clusters around fixed centers and splits the
rows into train / validation / test blocks. Throughout the package,
"player" indices refer to positions within the train split (0 .. n_train-1),
and validation/test vectors are indexed by position within their split.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .rng import make_rng

SPLIT_NAMES = ("train", "val", "test")

_LEARNER_KINDS = ("nearest-centroid", "multinomial-logistic")


@dataclass(frozen=True)
class LearnerSpec:
    """Configuration of a deterministic toy learner.

    ``learning_rate`` and ``iterations`` only apply to the multinomial
    logistic learner. ``seed`` is reserved for stochastic learners; the two
    built-in kinds are fully deterministic and ignore it.
    """

    kind: str = "nearest-centroid"
    learning_rate: float = 0.5
    iterations: int = 200
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in _LEARNER_KINDS:
            raise ValueError(f"unknown learner kind: {self.kind!r}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")


class LabeledDataset:
    """Feature/label table with a train/val/test partition of its rows.

    ``cluster_of`` (optional) assigns a cluster id to every train position.
    All arrays are made read-only; instances are safe to share across threads.
    """

    def __init__(
        self,
        features: np.ndarray,
        labels: np.ndarray,
        train_rows: np.ndarray,
        val_rows: np.ndarray,
        test_rows: np.ndarray,
        cluster_of: np.ndarray | None = None,
    ) -> None:
        self.features = np.ascontiguousarray(features, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.train_rows = np.asarray(train_rows, dtype=np.int64)
        self.val_rows = np.asarray(val_rows, dtype=np.int64)
        self.test_rows = np.asarray(test_rows, dtype=np.int64)
        self.cluster_of = (
            None if cluster_of is None else np.asarray(cluster_of, dtype=np.int64)
        )
        self._validate()
        for arr in (self.features, self.labels, self.train_rows, self.val_rows,
                    self.test_rows, self.cluster_of):
            if arr is not None:
                arr.setflags(write=False)

    def _validate(self) -> None:
        n_total = self.features.shape[0]
        if self.labels.shape != (n_total,):
            raise ValueError("labels must have one entry per row")
        if self.labels.size and self.labels.min() < 0:
            raise ValueError("labels must be nonnegative class ids")
        all_rows = np.concatenate([self.train_rows, self.val_rows, self.test_rows])
        if len(np.unique(all_rows)) != len(all_rows) or len(all_rows) != n_total:
            raise ValueError("splits must be disjoint and cover all rows")
        if all_rows.size and (all_rows.min() < 0 or all_rows.max() >= n_total):
            raise ValueError("split indices out of range")
        if self.cluster_of is not None and self.cluster_of.shape != self.train_rows.shape:
            raise ValueError("cluster_of must cover exactly the train positions")

    @property
    def n_train(self) -> int:
        return len(self.train_rows)

    @property
    def n_val(self) -> int:
        return len(self.val_rows)

    @property
    def n_test(self) -> int:
        return len(self.test_rows)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    def split_rows(self, name: str) -> np.ndarray:
        if name == "train":
            return self.train_rows
        if name == "val":
            return self.val_rows
        if name == "test":
            return self.test_rows
        raise ValueError(f"unknown split name: {name!r}")

    @property
    def train_features(self) -> np.ndarray:
        return self.features[self.train_rows]

    @property
    def train_labels(self) -> np.ndarray:
        return self.labels[self.train_rows]

    @property
    def num_clusters(self) -> int:
        if self.cluster_of is None:
            return 0
        return int(self.cluster_of.max()) + 1


def cluster_slices(sizes: Sequence[int]) -> list[slice]:
    """Contiguous position blocks for clusters generated in order.

    ``gen_clustered`` lays out every split cluster by cluster, so block k of
    a split holds exactly the points drawn around ``centers[k]``.
    """
    edges = np.concatenate([[0], np.cumsum(sizes)])
    return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def gen_clustered(
    centers: Sequence[Sequence[float]],
    sizes: Sequence[int],
    labels: Sequence[int],
    sigma: float,
    test_sizes: Sequence[int],
    seed: int,
    val_sizes: Sequence[int] | None = None,
) -> LabeledDataset:
    """Draw a clustered dataset with Gaussian noise around fixed centers.

    Train, validation and test splits are each drawn cluster by cluster, so
    positions within a split are grouped per ``cluster_slices``. Validation
    sizes default to ``test_sizes`` (a validation split is needed by the
    attribution estimator, which scores sampled models per validation point).
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if val_sizes is None:
        val_sizes = test_sizes
    k = len(centers)
    if not (len(sizes) == len(labels) == len(test_sizes) == len(val_sizes) == k):
        raise ValueError("centers, sizes, labels and test_sizes must have equal length")
    if k == 0:
        raise ValueError("at least one cluster is required")
    centers_arr = np.asarray(centers, dtype=np.float64)
    if centers_arr.ndim != 2:
        raise ValueError("centers must all have the same dimension")
    if any(s < 1 for s in sizes):
        raise ValueError("train cluster sizes must be >= 1")
    if any(s < 0 for s in test_sizes) or any(s < 0 for s in val_sizes):
        raise ValueError("split sizes must be nonnegative")

    dim = centers_arr.shape[1]
    feats: list[np.ndarray] = []
    labs: list[np.ndarray] = []
    for split_name, split_sizes in (("train", sizes), ("val", val_sizes), ("test", test_sizes)):
        rng = make_rng(seed, "gen", split_name)
        for c in range(k):
            block = centers_arr[c] + sigma * rng.standard_normal((split_sizes[c], dim))
            feats.append(block)
            labs.append(np.full(split_sizes[c], labels[c], dtype=np.int64))
    features = np.vstack(feats)
    label_arr = np.concatenate(labs)

    n_train = int(np.sum(sizes))
    n_val = int(np.sum(val_sizes))
    n_test = int(np.sum(test_sizes))
    train_rows = np.arange(n_train)
    val_rows = np.arange(n_train, n_train + n_val)
    test_rows = np.arange(n_train + n_val, n_train + n_val + n_test)
    cluster_of = np.repeat(np.arange(k), sizes)
    return LabeledDataset(features, label_arr, train_rows, val_rows, test_rows, cluster_of)


# Four Gaussian clusters in the plane with unequal sizes (3, 2, 2, 1); the
# singleton cluster makes redundancy effects visible at desk scale. Each
# cluster is its own class so that a nearest-centroid learner realizes the
# idealized model exactly: a test cluster is predicted correctly if and only
# if its training cluster is represented.
PRESET_CENTERS = ((-2.0, 0.5), (2.5, 0.0), (-2.5, -0.5), (2.0, 0.0))
PRESET_SIZES = (3, 2, 2, 1)
PRESET_LABELS = (0, 1, 2, 3)
PRESET_SIGMA = 0.1
PRESET_TEST_SIZES = (2, 2, 2, 2)


def preset_dataset(name: str = "fig1", seed: int = 0) -> LabeledDataset:
    """Build a named preset dataset. Currently only ``fig1`` is defined."""
    if name != "fig1":
        raise ValueError(f"unknown preset: {name!r}")
    return gen_clustered(
        PRESET_CENTERS,
        PRESET_SIZES,
        PRESET_LABELS,
        PRESET_SIGMA,
        PRESET_TEST_SIZES,
        seed=seed,
    )


@dataclass(frozen=True)
class NearestCentroidModel:
    """Predicts the class of the nearest class centroid.

    Only classes present in the training subset are ever predicted; distance
    ties resolve to the smallest class id.
    """

    classes: np.ndarray
    centroids: np.ndarray

    def predict(self, features: np.ndarray) -> np.ndarray:
        deltas = features[:, None, :] - self.centroids[None, :, :]
        dist2 = np.einsum("ijk,ijk->ij", deltas, deltas)
        return self.classes[np.argmin(dist2, axis=1)]


@dataclass(frozen=True)
class LogisticModel:
    """Multinomial logistic model over the classes seen during training."""

    classes: np.ndarray
    weights: np.ndarray
    bias: np.ndarray

    def predict(self, features: np.ndarray) -> np.ndarray:
        logits = features @ self.weights.T + self.bias
        return self.classes[np.argmax(logits, axis=1)]


@dataclass(frozen=True)
class ConstantModel:
    """Predicts one fixed label; stands in for a model trained on nothing."""

    label: int

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.full(len(features), self.label, dtype=np.int64)


Model = NearestCentroidModel | LogisticModel | ConstantModel


def _fit_nearest_centroid(features: np.ndarray, labels: np.ndarray) -> NearestCentroidModel:
    classes = np.unique(labels)
    centroids = np.vstack([features[labels == c].mean(axis=0) for c in classes])
    return NearestCentroidModel(classes, centroids)


def _fit_logistic(features: np.ndarray, labels: np.ndarray, spec: LearnerSpec) -> LogisticModel:
    classes = np.unique(labels)
    n, dim = features.shape
    onehot = (labels[:, None] == classes[None, :]).astype(np.float64)
    weights = np.zeros((len(classes), dim))
    bias = np.zeros(len(classes))
    for _ in range(spec.iterations):
        logits = features @ weights.T + bias
        logits -= logits.max(axis=1, keepdims=True)
        probs = np.exp(logits)
        probs /= probs.sum(axis=1, keepdims=True)
        grad = (probs - onehot) / n
        weights -= spec.learning_rate * (grad.T @ features)
        bias -= spec.learning_rate * grad.sum(axis=0)
    return LogisticModel(classes, weights, bias)


def train_learner(data: LabeledDataset, subset: Iterable[int], spec: LearnerSpec) -> Model:
    """Train the configured learner on a subset of train positions.

    Duplicate positions are allowed and act as sample weights (used by
    bootstrap resampling). Training is deterministic given (subset, spec).
    """
    idx = np.asarray(list(subset), dtype=np.int64)
    if idx.size == 0:
        raise ValueError("cannot train on an empty subset")
    if idx.min() < 0 or idx.max() >= data.n_train:
        raise ValueError("subset contains out-of-range train positions")
    feats = data.train_features[idx]
    labs = data.train_labels[idx]
    if spec.kind == "nearest-centroid":
        return _fit_nearest_centroid(feats, labs)
    return _fit_logistic(feats, labs, spec)


def majority_label(labels: np.ndarray) -> int:
    """Most frequent label; ties resolve to the smallest label."""
    classes, counts = np.unique(labels, return_counts=True)
    return int(classes[np.argmax(counts)])


def majority_model(data: LabeledDataset) -> ConstantModel:
    """Constant predictor of the majority class of the full train split."""
    return ConstantModel(majority_label(data.train_labels))


def correctness_vector(model: Model, data: LabeledDataset, on: str) -> np.ndarray:
    """Per-instance 0/1 correctness of ``model`` on a named split."""
    rows = data.split_rows(on)
    preds = model.predict(data.features[rows])
    return (preds == data.labels[rows]).astype(np.int64)


def accuracy(model: Model, data: LabeledDataset, on: str) -> float:
    """Mean of the correctness vector on a split."""
    vec = correctness_vector(model, data, on)
    return float(vec.mean()) if vec.size else 0.0


def save_dataset(data: LabeledDataset, path: str) -> None:
    """Write a dataset as CSV: ``x0,..,x{d-1},label,split,cluster``.

    The cluster column is populated for train rows only. Floats are written
    with 17 significant digits so a save/load round trip is bit-exact.
    """
    split_name = np.empty(data.features.shape[0], dtype=object)
    split_name[data.train_rows] = "train"
    split_name[data.val_rows] = "val"
    split_name[data.test_rows] = "test"
    cluster = np.full(data.features.shape[0], "", dtype=object)
    if data.cluster_of is not None:
        for pos, row in enumerate(data.train_rows):
            cluster[row] = str(int(data.cluster_of[pos]))
    header = [f"x{i}" for i in range(data.dim)] + ["label", "split", "cluster"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in range(data.features.shape[0]):
            cells = [format(v, ".17g") for v in data.features[row]]
            cells += [str(int(data.labels[row])), split_name[row], cluster[row]]
            writer.writerow(cells)


def load_dataset(path: str) -> LabeledDataset:
    """Read a dataset written by :func:`save_dataset`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 4 or header[-3:] != ["label", "split", "cluster"]:
            raise ValueError(f"malformed dataset header in {path!r}")
        dim = len(header) - 3
        feats: list[list[float]] = []
        labels: list[int] = []
        splits: list[str] = []
        clusters: list[str] = []
        for line_no, cells in enumerate(reader, start=2):
            if len(cells) != dim + 3:
                raise ValueError(f"{path!r}:{line_no}: wrong number of columns")
            feats.append([float(v) for v in cells[:dim]])
            labels.append(int(cells[dim]))
            if cells[dim + 1] not in SPLIT_NAMES:
                raise ValueError(f"{path!r}:{line_no}: unknown split {cells[dim + 1]!r}")
            splits.append(cells[dim + 1])
            clusters.append(cells[dim + 2])
    split_arr = np.array(splits)
    train_rows = np.flatnonzero(split_arr == "train")
    val_rows = np.flatnonzero(split_arr == "val")
    test_rows = np.flatnonzero(split_arr == "test")
    cluster_of = None
    if any(clusters[r] != "" for r in train_rows):
        cluster_of = np.array([int(clusters[r]) for r in train_rows], dtype=np.int64)
    return LabeledDataset(
        np.asarray(feats, dtype=np.float64),
        np.asarray(labels, dtype=np.int64),
        train_rows,
        val_rows,
        test_rows,
        cluster_of,
    )
