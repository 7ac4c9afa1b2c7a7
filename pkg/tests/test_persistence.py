import numpy as np
import pytest

from argue.baseline import ae_score, build_ae
from argue.datasets import ScalerState
from argue.errors import ModelKindError, PersistenceError
from argue.model import ArgueConfig, anomaly_scores, build
from argue.persistence import load_argue, load_baseline, load_model, save_model


@pytest.fixture
def model():
    m = build(ArgueConfig(7, [5, 3], 3, [4], [4]), seed=2)
    m.scaler = ScalerState(np.zeros(7), np.arange(1, 8, dtype=float))
    return m


def test_argue_round_trip_bitwise(tmp_path, model):
    X = np.random.default_rng(0).normal(size=(40, 7))
    save_model(tmp_path / "m.npz", model)
    back = load_argue(tmp_path / "m.npz")
    assert np.array_equal(anomaly_scores(back, X), anomaly_scores(model, X))
    for p, q in zip(model.ae_params() + model.detector_params(), back.ae_params() + back.detector_params()):
        assert p.dtype == q.dtype and np.array_equal(p, q)
    assert back.config == model.config
    assert np.array_equal(back.scaler.maximum, model.scaler.maximum)


def test_baseline_round_trip(tmp_path):
    ae = build_ae(6, [4, 2], seed=1)
    save_model(tmp_path / "ae.npz", ae)
    back = load_baseline(tmp_path / "ae.npz")
    X = np.random.default_rng(1).random((10, 6))
    assert np.array_equal(ae_score(back, X), ae_score(ae, X))
    assert back.encoder_dims == [4, 2]


def test_save_is_deterministic(tmp_path, model):
    save_model(tmp_path / "a.npz", model)
    save_model(tmp_path / "b.npz", model)
    assert (tmp_path / "a.npz").read_bytes() == (tmp_path / "b.npz").read_bytes()


def test_truncated(tmp_path, model):
    save_model(tmp_path / "m.npz", model)
    data = (tmp_path / "m.npz").read_bytes()
    (tmp_path / "m.npz").write_bytes(data[: len(data) // 2])
    with pytest.raises(PersistenceError):
        load_model(tmp_path / "m.npz")


def test_garbage(tmp_path):
    (tmp_path / "x.npz").write_bytes(b"not a model")
    with pytest.raises(PersistenceError):
        load_model(tmp_path / "x.npz")


def test_wrong_kind(tmp_path):
    save_model(tmp_path / "ae.npz", build_ae(4, [2]))
    with pytest.raises(TypeError):
        load_argue(tmp_path / "ae.npz")
    with pytest.raises(ModelKindError):
        load_model(tmp_path / "ae.npz", expect="argue")


def test_version_mismatch(tmp_path, model, monkeypatch):
    import argue.persistence as persistence

    monkeypatch.setattr(persistence, "VERSION", 99)
    save_model(tmp_path / "m.npz", model)
    monkeypatch.undo()
    with pytest.raises(PersistenceError, match="version"):
        load_model(tmp_path / "m.npz")


def test_missing_file(tmp_path):
    with pytest.raises(PersistenceError):
        load_model(tmp_path / "absent.npz")
