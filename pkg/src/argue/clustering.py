"""Distribute training samples among expert paths."""

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .datasets import Dataset
from .errors import ClusteringError, ConfigError, SchemaError

STRATEGIES = ("by_class", "by_attribute", "by_algorithm")
MAX_ATTRIBUTE_VALUES = 32


@dataclass
class ClusterAssignment:
    expert_index: np.ndarray
    expert_count: int
    strategy: str
    # label value for each expert index (class / attribute value); None for k-means
    values: list | None = None
    centroids: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.expert_index = np.asarray(self.expert_index, dtype=np.int64)
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        idx = self.expert_index
        if idx.size and (idx.min() < 0 or idx.max() >= self.expert_count):
            raise ClusteringError(f"expert indices must lie in [0, {self.expert_count})")
        occupied = np.bincount(idx, minlength=self.expert_count)
        if np.any(occupied == 0):
            raise ClusteringError(f"experts {np.flatnonzero(occupied == 0).tolist()} have no samples")

    def __len__(self):
        return self.expert_index.size

    def counts(self):
        return np.bincount(self.expert_index, minlength=self.expert_count)


def _by_sorted_values(values, strategy):
    values = np.asarray(values)
    levels, index = np.unique(values, return_inverse=True)
    return ClusterAssignment(index.ravel(), len(levels), strategy, levels.tolist())


def assign_by_class(class_labels) -> ClusterAssignment:
    """One expert per distinct label, indexed in sorted label order."""
    return _by_sorted_values(class_labels, "by_class")


def assign_by_attribute(dataset: Dataset, column: str, max_values=MAX_ATTRIBUTE_VALUES):
    """Split on a categorical attribute column.

    Returns the assignment and ``dataset`` with that column removed from the
    features, since it defines the split.
    """
    if column not in dataset.attributes:
        raise SchemaError(f"dataset carries no attribute column {column!r}")
    values = dataset.attributes[column]
    n_distinct = len(np.unique(values))
    if n_distinct > max_values:
        raise ClusteringError(
            f"attribute {column!r} has {n_distinct} distinct values (cap {max_values}); "
            "use the by_algorithm strategy instead"
        )
    if n_distinct == 1:
        warnings.warn(f"attribute {column!r} is constant; falling back to a single expert", stacklevel=2)
    assignment = _by_sorted_values(values, "by_attribute")
    return assignment, dataset.drop_feature_column(column)


def _inertia(X, centroids, labels):
    return float(np.sum((X - centroids[labels]) ** 2))


def kmeans_plusplus(X, k, rng):
    n = X.shape[0]
    centroids = np.empty((k, X.shape[1]))
    centroids[0] = X[rng.integers(n)]
    d2 = np.sum((X - centroids[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        # all remaining points coincide with chosen centroids
        nxt = rng.integers(n) if total == 0 else rng.choice(n, p=d2 / total)
        centroids[i] = X[nxt]
        d2 = np.minimum(d2, np.sum((X - centroids[i]) ** 2, axis=1))
    return centroids


def kmeans(X, k, seed=0, max_iter=100, tol=1e-6):
    """Lloyd iterations from k-means++ seeds.

    Returns ``(labels, centroids, inertia_history)``; the history holds the
    objective after seeding and after every iteration.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if k < 1:
        raise ConfigError("k must be >= 1")
    if k > n:
        raise ConfigError(f"k={k} exceeds the number of samples ({n})")
    rng = np.random.default_rng(seed)
    centroids = kmeans_plusplus(X, k, rng)
    labels, d2 = _kernels.nearest_center(X, centroids)
    history = [float(d2.sum())]
    for _ in range(max_iter):
        new = centroids.copy()
        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, X)
        filled = counts > 0
        new[filled] = sums[filled] / counts[filled, None]
        taken = set()
        for j in np.flatnonzero(~filled):
            # reseed an empty cluster at the point farthest from its centroid
            order = np.argsort(-d2, kind="stable")
            far = next(i for i in order if i not in taken)
            taken.add(far)
            new[j] = X[far]
        shift = float(np.max(np.linalg.norm(new - centroids, axis=1)))
        centroids = new
        labels, d2 = _kernels.nearest_center(X, centroids)
        history.append(float(d2.sum()))
        if shift < tol:
            break
    return labels, centroids, history


def assign_by_algorithm(features, k, seed=0) -> ClusterAssignment:
    """k-means on scaled features.

    If a cluster ends up empty after the final assignment the surviving
    clusters are renumbered, so ``expert_count`` may be smaller than ``k``.
    """
    labels, centroids, _ = kmeans(features, k, seed)
    used = np.unique(labels)
    if used.size < k:
        warnings.warn(f"k-means left {k - used.size} empty clusters; using {used.size} experts", stacklevel=2)
        remap = np.full(k, -1)
        remap[used] = np.arange(used.size)
        labels, centroids = remap[labels], centroids[used]
    return ClusterAssignment(labels, centroids.shape[0], "by_algorithm", None, centroids)


def nearest_expert(features, reference_features, reference_index, expert_count):
    """Assign rows to the expert whose member centroid is closest."""
    centroids = np.stack(
        [reference_features[reference_index == j].mean(axis=0) for j in range(expert_count)]
    )
    return _kernels.nearest_center(np.asarray(features, dtype=np.float64), centroids)[0]


def write_assignment(path, assignment: ClusterAssignment, row_index=None):
    """One ``row_index,expert_index`` line per sample."""
    rows = np.arange(len(assignment)) if row_index is None else np.asarray(row_index)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("row_index,expert_index\n")
        for r, j in zip(rows, assignment.expert_index):
            fh.write(f"{int(r)},{int(j)}\n")


def read_assignment(path, strategy="by_class"):
    data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
    idx = data[:, 1]
    return data[:, 0], ClusterAssignment(idx, int(idx.max()) + 1, strategy)
