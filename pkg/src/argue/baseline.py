"""Plain autoencoder whose reconstruction error is the anomaly score."""

from dataclasses import dataclass

import numpy as np

from .datasets import ScalerState
from .nn import AdamState, Network, adam_step, backward, dense_stack, forward, mse_grad
from .trainer import TrainConfig


@dataclass
class AeBaseline:
    network: Network
    encoder_dims: list
    scaler: ScalerState | None = None
    seed: int | None = None


def ae_layers(input_dim, encoder_dims):
    enc = dense_stack(input_dim, encoder_dims, "leaky_relu")
    dec = dense_stack(encoder_dims[-1], list(reversed(encoder_dims)) + [input_dim], "sigmoid")
    return enc + dec


def build_ae(input_dim, encoder_dims, seed=0, scaler=None) -> AeBaseline:
    rng = np.random.default_rng(seed)
    net = Network.initialize(ae_layers(input_dim, encoder_dims), rng)
    return AeBaseline(net, [int(d) for d in encoder_dims], scaler, seed)


def train_ae(X, cfg: TrainConfig, encoder_dims, model_seed=0, scaler=None, log=None):
    """Minimise reconstruction MSE with the same optimiser schedule as pretraining.

    Returns ``(AeBaseline, per-epoch losses)``.
    """
    X = np.asarray(X, dtype=np.float64)
    model = build_ae(X.shape[1], encoder_dims, model_seed, scaler)
    net = model.network
    rng = np.random.default_rng([cfg.seed, 0])
    params = net.params()
    state = AdamState(lr=cfg.lr)
    n, d = X.shape
    history = []
    for epoch in range(cfg.epochs_pretrain):
        perm = rng.permutation(n)
        sq_total = 0.0
        for s in range(0, n, cfg.batch_size):
            rows = perm[s : s + cfg.batch_size]
            Xb = X[rows]
            tr = forward(net, Xb)
            sq_total += float(np.sum((tr.output - Xb) ** 2))
            grads, _ = backward(net, tr, mse_grad(Xb, tr.output))
            adam_step(params, grads, state)
        history.append(sq_total / (n * d))
        if log is not None:
            log({"phase": "baseline", "epoch": epoch, "loss": history[-1]})
    return model, history


def ae_score(model: AeBaseline, x):
    """Mean squared reconstruction error per sample (scalar for a single vector)."""
    x = np.asarray(x, dtype=np.float64)
    x_hat = forward(model.network, x).output
    return np.mean((x_hat - x) ** 2, axis=-1)
