import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from argue.datasets import (
    IDX_IMAGES_MAGIC,
    IDX_LABELS_MAGIC,
    CsvSchema,
    Dataset,
    SplitSpec,
    apply_scale,
    export_csv,
    fit_scale,
    load_csv,
    load_idx,
    make_split,
    mark_anomalous_classes,
    read_split_manifest,
    synth_class_universe,
    synth_gaussian_mixture,
    write_idx,
    write_split_manifest,
)
from argue.errors import FormatError, IngestionError, ProtocolError, SchemaError
from argue.metrics import roc_auc


def write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestCsv:
    def test_basic(self, tmp_path):
        p = write(tmp_path, "a,b,label\n1,2,0\n3,4,1\n5,6.5,0\n")
        ds = load_csv(p, CsvSchema(label_column="label"))
        assert len(ds) == 3
        assert ds.feature_names == ["a", "b"]
        np.testing.assert_array_equal(ds.anomaly_labels, [0, 1, 0])
        np.testing.assert_array_equal(ds.features[2], [5, 6.5])

    def test_one_hot(self, tmp_path):
        p = write(tmp_path, "c,v\ny,1\nx,2\ny,3\n")
        ds = load_csv(p, CsvSchema(categorical_columns=["c"]))
        assert ds.feature_names == ["c=x", "c=y", "v"]
        np.testing.assert_array_equal(ds.features[:, :2], [[0, 1], [1, 0], [0, 1]])

    def test_attribute_kept(self, tmp_path):
        p = write(tmp_path, "proto,v,label\ntcp,1,0\nudp,2,0\n")
        ds = load_csv(p, CsvSchema(label_column="label", attribute_column="proto", categorical_columns=["proto"]))
        assert ds.attributes["proto"].tolist() == ["tcp", "udp"]

    def test_bad_cell(self, tmp_path):
        p = write(tmp_path, "a,b\n1,2\n3,oops\n")
        with pytest.raises(IngestionError, match="row 2.*'b'|'b'.*row 2"):
            load_csv(p)

    def test_missing_column(self, tmp_path):
        p = write(tmp_path, "a,b\n1,2\n")
        with pytest.raises(SchemaError):
            load_csv(p, CsvSchema(label_column="label"))

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        ds = Dataset(rng.normal(size=(20, 3)), ["a", "b", "c"], rng.integers(0, 2, 20))
        out = tmp_path / "out.csv"
        export_csv(ds, out)
        back = load_csv(out, CsvSchema(label_column="label"))
        assert np.array_equal(back.features, ds.features)
        np.testing.assert_array_equal(back.anomaly_labels, ds.anomaly_labels)


class TestIdx:
    def test_fixture(self, tmp_path):
        imgs = np.zeros((3, 28, 28), np.uint8)
        imgs[1, 0, 0] = 255
        imgs[2, 5, 7] = 51
        write_idx(tmp_path / "i", imgs, IDX_IMAGES_MAGIC)
        write_idx(tmp_path / "l", np.array([3, 7, 0], np.uint8), IDX_LABELS_MAGIC)
        ds = load_idx(tmp_path / "i", tmp_path / "l")
        assert ds.features.shape == (3, 784)
        assert ds.features[1, 0] == 1.0
        assert ds.features[2, 5 * 28 + 7] == pytest.approx(0.2)
        np.testing.assert_array_equal(ds.class_labels, [3, 7, 0])

    def test_bad_magic(self, tmp_path):
        (tmp_path / "i").write_bytes(struct.pack(">IIII", 0x999, 1, 2, 2) + bytes(4))
        write_idx(tmp_path / "l", np.array([1], np.uint8), IDX_LABELS_MAGIC)
        with pytest.raises(FormatError):
            load_idx(tmp_path / "i", tmp_path / "l")

    def test_truncated(self, tmp_path):
        write_idx(tmp_path / "i", np.zeros((4, 2, 2), np.uint8), IDX_IMAGES_MAGIC)
        data = (tmp_path / "i").read_bytes()
        (tmp_path / "i").write_bytes(data[:-3])
        write_idx(tmp_path / "l", np.zeros(4, np.uint8), IDX_LABELS_MAGIC)
        with pytest.raises(FormatError):
            load_idx(tmp_path / "i", tmp_path / "l")

    def test_mark_anomalous(self, tmp_path):
        ds = Dataset(np.zeros((4, 1)), ["p"], class_labels=np.array([0, 5, 4, 9]))
        np.testing.assert_array_equal(mark_anomalous_classes(ds, range(5)).anomaly_labels, [0, 1, 0, 1])


class TestScaling:
    def test_examples(self):
        s = fit_scale(np.array([[2.0, 1.0], [4.0, 1.0]]))
        np.testing.assert_array_equal(apply_scale(s, [[3.0, 7.0], [6.0, 1.0]]), [[0.5, 0.5], [2.0, 0.5]])

    @settings(max_examples=30)
    @given(st.integers(0, 10_000))
    def test_train_in_unit_box(self, seed):
        X = np.random.default_rng(seed).normal(size=(30, 4)) * 100
        Z = apply_scale(fit_scale(X), X)
        assert Z.min() >= 0 and Z.max() <= 1


class TestSplit:
    def data(self, normals=1000, anomalies=100):
        y = np.r_[np.zeros(normals, int), np.ones(anomalies, int)]
        return Dataset(np.arange(y.size, dtype=float)[:, None], ["x"], y)

    def test_pollution(self):
        sp = make_split(self.data(), SplitSpec(test_fraction=0.2, pollution_rate=0.01, seed=1))
        assert sp.polluted_rows.size == int(np.floor(0.01 * 800))
        assert not sp.train.anomaly_labels.any()
        assert np.all(self.data().anomaly_labels[sp.polluted_rows] == 1)

    def test_budget(self):
        sp = make_split(self.data(), SplitSpec(known_anomaly_budget=100 - 1, seed=0))
        assert sp.train.anomaly_labels.sum() == 99
        sp = make_split(self.data(anomalies=300), SplitSpec(known_anomaly_budget=100, seed=0))
        assert sp.train.anomaly_labels.sum() == 100

    def test_pure_normal(self):
        d = self.data()
        sp = make_split(d, SplitSpec(seed=2))
        assert not d.anomaly_labels[sp.train_rows].any()

    def test_disjoint_and_exhaustive(self):
        d = self.data()
        sp = make_split(d, SplitSpec(pollution_rate=0.05, known_anomaly_budget=10, seed=3))
        assert not set(sp.train_rows) & set(sp.test_rows)
        assert set(sp.train_rows) | set(sp.test_rows) == set(range(len(d)))

    def test_insufficient(self):
        with pytest.raises(ProtocolError):
            make_split(self.data(anomalies=10), SplitSpec(pollution_rate=0.01, known_anomaly_budget=5))

    def test_deterministic(self):
        a = make_split(self.data(), SplitSpec(pollution_rate=0.01, seed=5))
        b = make_split(self.data(), SplitSpec(pollution_rate=0.01, seed=5))
        assert np.array_equal(a.train_rows, b.train_rows) and np.array_equal(a.test_rows, b.test_rows)

    def test_test_anomaly_cap(self):
        sp = make_split(self.data(), SplitSpec(test_anomaly_count=40))
        assert sp.test.anomaly_labels.sum() == 40

    def test_manifest_round_trip(self, tmp_path):
        d = self.data()
        sp = make_split(d, SplitSpec(pollution_rate=0.02, known_anomaly_budget=7, seed=4))
        sc = fit_scale(sp.train.features)
        write_split_manifest(tmp_path / "s.json", sp, sc)
        sp2, sc2 = read_split_manifest(tmp_path / "s.json", d)
        assert np.array_equal(sp2.train.features, sp.train.features)
        assert np.array_equal(sp2.train.anomaly_labels, sp.train.anomaly_labels)
        assert np.array_equal(sp2.test.anomaly_labels, sp.test.anomaly_labels)
        assert np.array_equal(sc2.minimum, sc.minimum)


class TestSynthetic:
    def test_rejection_radius(self):
        ds = synth_gaussian_mixture(3, 5, 200, 150, seed=1)
        anom = ds.features[ds.anomaly_labels == 1]
        d = np.linalg.norm(anom[:, None] - ds.meta["centers"][None], axis=2)
        assert d.min() >= 3.0

    def test_centers_separated(self):
        c = synth_gaussian_mixture(5, 3, 10, 10, seed=2).meta["centers"]
        d = np.linalg.norm(c[:, None] - c[None], axis=2)
        assert d[np.triu_indices(5, 1)].min() >= 6.0

    def test_single_cluster(self):
        ds = synth_gaussian_mixture(1, 4, 100, 10, seed=0)
        assert set(ds.class_labels[ds.anomaly_labels == 0]) == {0}

    def test_distance_oracle(self):
        ds = synth_gaussian_mixture(4, 20, 500, 400, seed=3)
        d = np.linalg.norm(ds.features[:, None] - ds.meta["centers"][None], axis=2).min(axis=1)
        assert roc_auc(d, ds.anomaly_labels) >= 0.99

    def test_universe_fixed_anomalies(self):
        a = synth_class_universe(1, k_max=3, anomaly_clusters=2, dim=5, n_per_cluster=50, anomalies_per_cluster=10)
        b = synth_class_universe(3, k_max=3, anomaly_clusters=2, dim=5, n_per_cluster=50, anomalies_per_cluster=10)
        assert np.array_equal(a.features[a.anomaly_labels == 1], b.features[b.anomaly_labels == 1])
        assert sorted(set(b.class_labels[b.anomaly_labels == 0])) == [0, 1, 2]
        with pytest.raises(ProtocolError):
            synth_class_universe(4, k_max=3)
