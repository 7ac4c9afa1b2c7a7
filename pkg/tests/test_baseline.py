import numpy as np
import pytest

from argue.baseline import ae_score, build_ae, train_ae
from argue.datasets import SplitSpec, apply_scale, fit_scale, make_split, synth_gaussian_mixture
from argue.model import ArgueConfig, build
from argue.nn import Network, loss_mse_recon
from argue.trainer import TrainConfig, pretrain


@pytest.fixture(scope="module")
def one_cluster():
    ds = synth_gaussian_mixture(1, 6, 600, 100, seed=5)
    sp = make_split(ds, SplitSpec(test_fraction=0.3, seed=5))
    sc = fit_scale(sp.train.features)
    return apply_scale(sc, sp.train.features), apply_scale(sc, sp.test.features), sp.test.anomaly_labels


class TestTrainAe:
    def test_loss_descends(self, one_cluster):
        X = one_cluster[0]
        _, hist = train_ae(X, TrainConfig(epochs_pretrain=5, batch_size=32, lr=1e-3), [4, 2])
        assert hist[-1] < hist[0]

    def test_deterministic(self, one_cluster):
        X = one_cluster[0]
        cfg = TrainConfig(epochs_pretrain=2, batch_size=32, seed=3)
        a, _ = train_ae(X, cfg, [4, 2], model_seed=1)
        b, _ = train_ae(X, cfg, [4, 2], model_seed=1)
        for p, q in zip(a.network.params(), b.network.params()):
            assert np.array_equal(p, q)

    def test_equals_single_expert_pretraining(self, one_cluster):
        X = one_cluster[0]
        cfg = TrainConfig(epochs_pretrain=3, batch_size=64, seed=4, lr=1e-3)
        ae, hist = train_ae(X, cfg, [5, 3], model_seed=8)
        model = build(ArgueConfig(6, [5, 3], 1), 8)
        pre = pretrain(model, X, np.zeros(len(X), int), cfg)
        assert pre == hist
        for p, q in zip(ae.network.params(), model.ae_params()):
            assert np.array_equal(p, q)

    def test_anomalies_score_higher(self, one_cluster):
        X, Xt, yt = one_cluster
        ae, _ = train_ae(X, TrainConfig(epochs_pretrain=15, batch_size=32, lr=3e-3), [4, 2])
        s = ae_score(ae, Xt)
        assert s[yt == 1].mean() > s[yt == 0].mean()


class TestScore:
    def test_matches_loss(self):
        ae = build_ae(5, [3], seed=2)
        x = np.random.default_rng(0).random(5)
        from argue.nn import forward

        assert ae_score(ae, x) == pytest.approx(loss_mse_recon(x, forward(ae.network, x).output), rel=1e-15)

    def test_perfect_reconstruction(self):
        # saturated sigmoid outputs reproduce a binary input exactly
        ae = build_ae(2, [1], seed=0)
        net = ae.network
        for W in net.weights:
            W[:] = 0
        for b in net.biases:
            b[:] = 0
        net.biases[-1][:] = [-800, 800]
        assert ae_score(ae, np.array([0.0, 1.0])) == 0.0

    def test_nonnegative(self):
        ae = build_ae(4, [2], seed=1)
        s = ae_score(ae, np.random.default_rng(2).normal(size=(50, 4)))
        assert s.shape == (50,) and np.all(s >= 0)
