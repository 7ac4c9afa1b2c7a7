"""Data ingestion, [0,1] scaling, train/test protocols and synthetic mixtures."""

import csv
import json
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import FormatError, IngestionError, ProtocolError, SchemaError, ShapeError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    features: np.ndarray
    feature_names: list
    anomaly_labels: np.ndarray | None = None
    class_labels: np.ndarray | None = None
    # raw (pre-encoding) values of columns that may drive a by-attribute split
    attributes: dict = field(default_factory=dict)
    row_index: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ShapeError(f"features must be 2-D, got shape {self.features.shape}")
        n = self.features.shape[0]
        if len(self.feature_names) != self.features.shape[1]:
            raise ShapeError("one feature name per column required")
        if self.row_index is None:
            self.row_index = np.arange(n)
        for name, arr in (
            ("anomaly_labels", self.anomaly_labels),
            ("class_labels", self.class_labels),
            ("row_index", self.row_index),
            *((f"attribute {k!r}", v) for k, v in self.attributes.items()),
        ):
            if arr is not None and len(arr) != n:
                raise ShapeError(f"{name} has {len(arr)} rows, features have {n}")

    def __len__(self):
        return self.features.shape[0]

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(
            self.features[rows],
            list(self.feature_names),
            None if self.anomaly_labels is None else self.anomaly_labels[rows],
            None if self.class_labels is None else self.class_labels[rows],
            {k: v[rows] for k, v in self.attributes.items()},
            self.row_index[rows],
            dict(self.meta),
        )

    def drop_feature_column(self, column: str) -> "Dataset":
        """Remove the feature column ``column`` (or its one-hot expansion ``column=*``)."""
        keep = [
            i for i, name in enumerate(self.feature_names)
            if name != column and not name.startswith(f"{column}=")
        ]
        if len(keep) == len(self.feature_names):
            raise SchemaError(f"no feature column named {column!r}")
        return replace(
            self,
            features=self.features[:, keep],
            feature_names=[self.feature_names[i] for i in keep],
        )


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


@dataclass
class CsvSchema:
    label_column: str | None = None
    attribute_column: str | None = None
    class_column: str | None = None
    categorical_columns: list = field(default_factory=list)
    # label values counted as anomalous; everything else is normal
    anomaly_values: list = field(default_factory=lambda: ["1"])


def load_csv(path, schema: CsvSchema | None = None) -> Dataset:
    """Read a headed, comma-separated UTF-8 file.

    Numeric columns become features as-is, categorical columns are one-hot
    encoded (``name=value``, values sorted).  The label and class columns are
    not features; the attribute column stays a feature and its raw values are
    also kept in ``Dataset.attributes``.
    """
    schema = schema or CsvSchema()
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise IngestionError(f"{path}: empty file")
    header, body = [h.strip() for h in rows[0]], rows[1:]
    for i, r in enumerate(body):
        if len(r) != len(header):
            raise IngestionError(f"{path}: row {i + 1} has {len(r)} cells, header has {len(header)}")
    named = [schema.label_column, schema.attribute_column, schema.class_column, *schema.categorical_columns]
    for col in named:
        if col is not None and col not in header:
            raise SchemaError(f"{path}: missing column {col!r}")
    cols = {h: [r[i].strip() for r in body] for i, h in enumerate(header)}

    blocks, names = [], []
    for h in header:
        if h in (schema.label_column, schema.class_column):
            continue
        values = cols[h]
        if h in schema.categorical_columns:
            levels = sorted(set(values))
            arr = np.array(values)
            blocks.append(np.stack([(arr == lv).astype(np.float64) for lv in levels], axis=1))
            names.extend(f"{h}={lv}" for lv in levels)
        else:
            out = np.empty(len(values))
            for i, v in enumerate(values):
                try:
                    out[i] = float(v)
                except ValueError:
                    raise IngestionError(f"{path}: cannot parse {v!r} at row {i + 1}, column {h!r}") from None
            blocks.append(out[:, None])
            names.append(h)
    features = np.concatenate(blocks, axis=1) if blocks else np.zeros((len(body), 0))

    labels = None
    if schema.label_column is not None:
        wanted = {str(v) for v in schema.anomaly_values}
        labels = np.array([v in wanted for v in cols[schema.label_column]], dtype=np.int64)
    classes = None if schema.class_column is None else np.array(cols[schema.class_column])
    attributes = {}
    if schema.attribute_column is not None:
        attributes[schema.attribute_column] = np.array(cols[schema.attribute_column])
    return Dataset(features, names, labels, classes, attributes)


def export_csv(dataset: Dataset, path, label_column="label"):
    """Write features (and anomaly labels, if any) as a headed CSV."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        header = list(dataset.feature_names)
        if dataset.anomaly_labels is not None:
            header.append(label_column)
        w.writerow(header)
        for i in range(len(dataset)):
            row = [repr(float(v)) for v in dataset.features[i]]
            if dataset.anomaly_labels is not None:
                row.append(str(int(dataset.anomaly_labels[i])))
            w.writerow(row)


# ---------------------------------------------------------------------------
# IDX (MNIST distribution format)
# ---------------------------------------------------------------------------


def _read_idx(path, magic):
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise FormatError(f"{path}: truncated header")
    found, count = struct.unpack(">II", data[:8])
    if found != magic:
        raise FormatError(f"{path}: bad magic 0x{found:08x}, expected 0x{magic:08x}")
    ndim = magic & 0xFF
    head = 4 + 4 * ndim
    if len(data) < head:
        raise FormatError(f"{path}: truncated header")
    dims = struct.unpack(f">{ndim}I", data[4:head])
    size = math.prod(dims)
    if len(data) - head < size:
        raise FormatError(f"{path}: expected {size} bytes of data, found {len(data) - head}")
    return np.frombuffer(data, dtype=np.uint8, count=size, offset=head).reshape(dims)


def load_idx(images_path, labels_path) -> Dataset:
    images = _read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    flat = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    names = [f"px{i}" for i in range(flat.shape[1])]
    return Dataset(flat, names, class_labels=labels.astype(np.int64))


def write_idx(path, array, magic):
    """Write a uint8 array in IDX layout (used for fixtures and exports)."""
    array = np.asarray(array, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">I", magic))
        fh.write(struct.pack(f">{array.ndim}I", *array.shape))
        fh.write(array.tobytes())


def mark_anomalous_classes(dataset: Dataset, normal_classes) -> Dataset:
    """Set anomaly labels: 0 for rows whose class is in ``normal_classes``, else 1."""
    if dataset.class_labels is None:
        raise SchemaError("dataset has no class labels")
    normal = np.isin(dataset.class_labels, np.asarray(list(normal_classes)))
    return replace(dataset, anomaly_labels=(~normal).astype(np.int64))


# ---------------------------------------------------------------------------
# scaling
# ---------------------------------------------------------------------------


@dataclass
class ScalerState:
    minimum: np.ndarray
    maximum: np.ndarray

    def to_dict(self):
        return {"minimum": self.minimum.tolist(), "maximum": self.maximum.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["minimum"], dtype=np.float64), np.asarray(d["maximum"], dtype=np.float64))


def fit_scale(train_normals) -> ScalerState:
    X = np.asarray(train_normals, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ShapeError("need a non-empty 2-D matrix to fit the scaler")
    return ScalerState(X.min(axis=0), X.max(axis=0))


def apply_scale(state: ScalerState, features) -> np.ndarray:
    """Min-max map fitted on training normals; no clipping, constant features -> 0.5."""
    X = np.asarray(features, dtype=np.float64)
    if X.shape[-1] != state.minimum.size:
        raise ShapeError(f"expected {state.minimum.size} features, got {X.shape[-1]}")
    span = state.maximum - state.minimum
    const = span == 0
    out = (X - state.minimum) / np.where(const, 1.0, span)
    out[..., const] = 0.5
    return out


# ---------------------------------------------------------------------------
# splitting
# ---------------------------------------------------------------------------


@dataclass
class SplitSpec:
    test_fraction: float = 0.2
    pollution_rate: float = 0.0
    known_anomaly_budget: int = 0
    seed: int = 0
    # cap on test anomalies; None puts every remaining anomaly in the test set
    test_anomaly_count: int | None = None

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ProtocolError("test_fraction must lie in (0, 1)")
        if not 0.0 <= self.pollution_rate < 1.0:
            raise ProtocolError("pollution_rate must lie in [0, 1)")
        if self.known_anomaly_budget < 0:
            raise ProtocolError("known_anomaly_budget must be >= 0")


@dataclass
class Split:
    train: Dataset
    test: Dataset
    # positions into the source dataset
    train_rows: np.ndarray
    test_rows: np.ndarray
    polluted_rows: np.ndarray
    known_anomaly_rows: np.ndarray
    spec: SplitSpec


def make_split(dataset: Dataset, spec: SplitSpec) -> Split:
    """Seeded train/test split following the pollution and label-budget protocols.

    Train holds ``1 - test_fraction`` of the normals, ``floor(pollution_rate *
    n_train_normals)`` anomalies relabelled 0, and ``known_anomaly_budget``
    anomalies labelled 1.  Test holds the remaining normals and anomalies.
    """
    if dataset.anomaly_labels is None:
        raise ProtocolError("dataset has no anomaly labels to split on")
    rng = np.random.default_rng(spec.seed)
    labels = np.asarray(dataset.anomaly_labels)
    normals = rng.permutation(np.flatnonzero(labels == 0))
    anomalies = rng.permutation(np.flatnonzero(labels != 0))
    n_test_norm = int(round(spec.test_fraction * normals.size))
    if n_test_norm < 1 or n_test_norm >= normals.size:
        raise ProtocolError(f"test_fraction {spec.test_fraction} leaves an empty side of {normals.size} normals")
    test_norm, train_norm = normals[:n_test_norm], normals[n_test_norm:]
    n_pollute = int(math.floor(spec.pollution_rate * train_norm.size))
    n_known = int(spec.known_anomaly_budget)
    if n_pollute + n_known >= anomalies.size:
        raise ProtocolError(
            f"need {n_pollute} polluting + {n_known} known anomalies and at least one for testing, "
            f"only {anomalies.size} available"
        )
    polluted = anomalies[:n_pollute]
    known = anomalies[n_pollute : n_pollute + n_known]
    test_anom = anomalies[n_pollute + n_known :]
    if spec.test_anomaly_count is not None:
        test_anom = test_anom[: spec.test_anomaly_count]

    train_rows = np.concatenate([train_norm, polluted, known])
    test_rows = np.concatenate([test_norm, test_anom])
    train = dataset.take(train_rows)
    # pollution is invisible to the trainer
    train.anomaly_labels = np.concatenate(
        [np.zeros(train_norm.size + n_pollute, dtype=np.int64), np.ones(n_known, dtype=np.int64)]
    )
    test = dataset.take(test_rows)
    return Split(train, test, train_rows, test_rows, polluted, known, spec)


def write_split_manifest(path, split: Split, scaler: ScalerState | None = None, extra=None):
    doc = {
        "seed": split.spec.seed,
        "spec": {
            "test_fraction": split.spec.test_fraction,
            "pollution_rate": split.spec.pollution_rate,
            "known_anomaly_budget": split.spec.known_anomaly_budget,
            "test_anomaly_count": split.spec.test_anomaly_count,
        },
        "train_rows": split.train_rows.tolist(),
        "test_rows": split.test_rows.tolist(),
        "polluted_rows": split.polluted_rows.tolist(),
        "known_anomaly_rows": split.known_anomaly_rows.tolist(),
        "scaler": None if scaler is None else scaler.to_dict(),
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=1))


def read_split_manifest(path, dataset: Dataset):
    """Rebuild the split recorded by ``write_split_manifest`` against ``dataset``."""
    doc = json.loads(Path(path).read_text())
    s = doc["spec"]
    spec = SplitSpec(s["test_fraction"], s["pollution_rate"], s["known_anomaly_budget"], doc["seed"], s["test_anomaly_count"])
    train_rows = np.asarray(doc["train_rows"], dtype=np.int64)
    test_rows = np.asarray(doc["test_rows"], dtype=np.int64)
    known = np.asarray(doc["known_anomaly_rows"], dtype=np.int64)
    train = dataset.take(train_rows)
    train.anomaly_labels = np.isin(train_rows, known).astype(np.int64)
    split = Split(
        train, dataset.take(test_rows), train_rows, test_rows,
        np.asarray(doc["polluted_rows"], dtype=np.int64), known, spec,
    )
    scaler = None if doc["scaler"] is None else ScalerState.from_dict(doc["scaler"])
    return split, scaler


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------


def _place_centers(k, dim, min_dist, rng, max_tries=10000):
    side = min_dist * max(1.0, k ** (1.0 / dim))
    for _ in range(50):
        centers = []
        tries = 0
        while len(centers) < k and tries < max_tries:
            c = rng.uniform(0.0, side, size=dim)
            if all(np.linalg.norm(c - o) >= min_dist for o in centers):
                centers.append(c)
            tries += 1
        if len(centers) == k:
            return np.array(centers)
        side *= 1.5
    raise ProtocolError(f"could not place {k} centers at distance {min_dist}")


def synth_gaussian_mixture(
    k_clusters, dim, n_per_cluster, anomaly_count, separation=6.0, seed=0, sigma=1.0, reject_radius=3.0
) -> Dataset:
    """Isotropic Gaussian clusters plus uniform off-cluster anomalies.

    Centers sit at mutual distance >= ``separation * sigma``.  Anomalies are
    uniform in the bounding box of the normal data, rejected within
    ``reject_radius * sigma`` of any center.  Class label = generating cluster,
    -1 for anomalies.
    """
    if k_clusters < 1 or separation <= 0:
        raise ProtocolError("need k_clusters >= 1 and separation > 0")
    rng = np.random.default_rng(seed)
    centers = _place_centers(k_clusters, dim, separation * sigma, rng)
    normals = np.concatenate(
        [c + sigma * rng.standard_normal((n_per_cluster, dim)) for c in centers]
    )
    classes = np.repeat(np.arange(k_clusters), n_per_cluster)
    lo, hi = normals.min(axis=0), normals.max(axis=0)
    anomalies = np.zeros((0, dim))
    for _ in range(1000):
        if anomalies.shape[0] >= anomaly_count:
            break
        cand = rng.uniform(lo, hi, size=(max(4 * anomaly_count, 64), dim))
        d = np.linalg.norm(cand[:, None, :] - centers[None, :, :], axis=2).min(axis=1)
        anomalies = np.concatenate([anomalies, cand[d >= reject_radius * sigma]])
    if anomalies.shape[0] < anomaly_count:
        raise ProtocolError("bounding box too tight to place the requested anomalies")
    anomalies = anomalies[:anomaly_count]
    X = np.concatenate([normals, anomalies])
    labels = np.concatenate([np.zeros(len(normals), dtype=np.int64), np.ones(anomaly_count, dtype=np.int64)])
    classes = np.concatenate([classes, np.full(anomaly_count, -1)])
    return Dataset(X, [f"x{i}" for i in range(dim)], labels, classes, meta={"centers": centers, "sigma": sigma})


def synth_class_universe(
    k_clusters, k_max=6, anomaly_clusters=6, dim=20, n_per_cluster=1000,
    anomalies_per_cluster=100, separation=6.0, seed=0, sigma=1.0,
) -> Dataset:
    """Normal classes 0..k-1 out of a fixed pool of ``k_max``, plus fixed anomaly classes.

    All ``k_max + anomaly_clusters`` centers are placed first, then the anomaly
    samples, then the normals, so for a given ``seed`` the anomalies are the
    same for every ``k_clusters``.  Anomalies carry class label -1.
    """
    if not 1 <= k_clusters <= k_max:
        raise ProtocolError(f"k_clusters must lie in [1, {k_max}]")
    rng = np.random.default_rng(seed)
    centers = _place_centers(k_max + anomaly_clusters, dim, separation * sigma, rng)
    anomalies = np.concatenate(
        [c + sigma * rng.standard_normal((anomalies_per_cluster, dim)) for c in centers[k_max:]]
    )
    normals = [c + sigma * rng.standard_normal((n_per_cluster, dim)) for c in centers[:k_max]]
    X = np.concatenate(normals[:k_clusters] + [anomalies])
    n_norm = k_clusters * n_per_cluster
    labels = np.concatenate([np.zeros(n_norm, dtype=np.int64), np.ones(len(anomalies), dtype=np.int64)])
    classes = np.concatenate([np.repeat(np.arange(k_clusters), n_per_cluster), np.full(len(anomalies), -1)])
    return Dataset(X, [f"x{i}" for i in range(dim)], labels, classes, meta={"centers": centers[:k_clusters], "sigma": sigma})
