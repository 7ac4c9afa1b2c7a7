"""Two-phase training: multi-head autoencoder pretraining, then alarm + gate."""

import json
from dataclasses import asdict, dataclass

import numpy as np

from .clustering import ClusterAssignment
from .errors import ConfigError, ModeError, ShapeError
from .model import ArgueModel, detector_gradients
from .nn import AdamState, adam_step, backward, forward, mse_grad

MODES = ("unsupervised", "semi_supervised")
SAMPLE_KINDS = ("normal", "known_anomaly", "noise")


@dataclass
class TrainConfig:
    epochs_pretrain: int = 30
    epochs_detector: int = 30
    batch_size: int = 256
    noise_ratio: float = 1.0
    mode: str = "unsupervised"
    known_anomaly_budget: int = 0
    seed: int = 0
    lr: float = 1e-4

    def __post_init__(self):
        if self.mode == "semi":
            self.mode = "semi_supervised"
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "unsupervised" and self.known_anomaly_budget != 0:
            raise ConfigError("unsupervised mode requires known_anomaly_budget = 0")
        for name in ("epochs_pretrain", "epochs_detector", "batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.noise_ratio <= 0:
            raise ConfigError("noise_ratio must be > 0")

    def to_dict(self):
        return asdict(self)


@dataclass
class TargetPair:
    y: float
    p_target: np.ndarray


def anomaly_target(expert_count):
    p = np.zeros(expert_count + 1)
    p[-1] = 1.0
    return p


def make_targets(kind, expert_count, j=None, mode="semi_supervised") -> TargetPair:
    """Alarm label and gate target for one sample.

    ``kind`` is one of ``normal`` (needs expert index ``j``), ``known_anomaly``
    or ``noise``.
    """
    if kind == "normal":
        if j is None or not 0 <= j < expert_count:
            raise IndexError(f"normal sample needs an expert index in [0, {expert_count})")
        p = np.zeros(expert_count + 1)
        p[j] = 1.0
        return TargetPair(0.0, p)
    if kind == "known_anomaly":
        if mode == "unsupervised":
            raise ModeError("known anomalies are not available in unsupervised mode")
        return TargetPair(1.0, anomaly_target(expert_count))
    if kind == "noise":
        return TargetPair(1.0, anomaly_target(expert_count))
    raise ValueError(f"unknown sample kind {kind!r}")


def real_targets(expert_index, known_anomaly, expert_count, mode):
    """Vectorised ``make_targets`` for the real training rows."""
    expert_index = np.asarray(expert_index, dtype=np.int64)
    known = np.zeros(expert_index.size, bool) if known_anomaly is None else np.asarray(known_anomaly, bool)
    if mode == "unsupervised" and known.any():
        raise ModeError("known anomalies are not available in unsupervised mode")
    y = known.astype(np.float64)
    p = np.zeros((expert_index.size, expert_count + 1))
    normal = ~known
    p[np.flatnonzero(normal), expert_index[normal]] = 1.0
    p[known, -1] = 1.0
    return y, p


def sample_noise(dim, count, rng):
    """Counterexamples drawn i.i.d. from N(0.5, 1) per dimension, unclipped."""
    if dim < 1 or count < 1:
        raise ValueError("dim and count must be >= 1")
    return rng.normal(0.5, 1.0, size=(count, dim))


def _rngs(seed):
    return np.random.default_rng([seed, 0]), np.random.default_rng([seed, 1])


def _as_index(assignment):
    if isinstance(assignment, ClusterAssignment):
        return assignment.expert_index
    return np.asarray(assignment, dtype=np.int64)


def pretrain(model: ArgueModel, X, assignment, cfg: TrainConfig, log=None):
    """Train encoder and experts to reconstruct their own cluster.

    Every batch updates the encoder with gradients from all experts; expert j
    only sees rows assigned to it.  The loss is the batch mean of each row's
    squared reconstruction error under its own expert.  Returns per-epoch mean
    losses (computed before each update).
    """
    X = np.asarray(X, dtype=np.float64)
    index = _as_index(assignment)
    J = model.expert_count
    if index.size != X.shape[0]:
        raise ShapeError(f"{X.shape[0]} rows but {index.size} assignments")
    counts = np.bincount(index, minlength=J)
    if counts.size > J:
        raise ConfigError(f"assignment uses {counts.size} experts, model has {J}")
    for j in np.flatnonzero(counts == 0):
        raise ConfigError(f"cluster {j} has no training samples")

    rng, _ = _rngs(cfg.seed)
    params = model.ae_params()
    state = AdamState(lr=cfg.lr)
    n, d = X.shape
    history = []
    for epoch in range(cfg.epochs_pretrain):
        perm = rng.permutation(n)
        sq_total = 0.0
        for s in range(0, n, cfg.batch_size):
            rows = perm[s : s + cfg.batch_size]
            Xb = X[rows]
            ib = index[rows]
            enc = forward(model.encoder, Xb)
            grads = []
            d_latent = None
            for j, expert in enumerate(model.experts):
                mine = ib == j
                if mine.all():
                    xj, zj = Xb, enc.output
                elif mine.any():
                    xj, zj = Xb[mine], enc.output[mine]
                else:
                    grads.append([np.zeros_like(p) for p in expert.params()])
                    continue
                tr = forward(expert, zj)
                sq_total += float(np.sum((tr.output - xj) ** 2))
                g_exp, g_in = backward(expert, tr, mse_grad(xj, tr.output, n_rows=rows.size))
                grads.append(g_exp)
                if mine.all():
                    d_latent = g_in
                else:
                    if d_latent is None:
                        d_latent = np.zeros_like(enc.output)
                    d_latent[mine] += g_in
            g_enc, _ = backward(model.encoder, enc, d_latent)
            flat = list(g_enc)
            for g in grads:
                flat.extend(g)
            adam_step(params, flat, state)
        loss = sq_total / (n * d)
        history.append(loss)
        if log is not None:
            log({"phase": "pretrain", "epoch": epoch, "loss": loss})
    return history


def train_detector(model: ArgueModel, X, assignment, cfg: TrainConfig, known_anomaly=None, log=None):
    """Fit alarm and gate with encoder and experts frozen.

    Each batch of real rows is joined by ``round(noise_ratio * len(batch))``
    noise rows.  Losses are (mean over real rows) + (mean over noise rows) of
    BCE on the fused score for the alarm and CCE on the gate output for the
    gate.  Returns per-epoch dicts with both losses.
    """
    X = np.asarray(X, dtype=np.float64)
    index = _as_index(assignment)
    J = model.expert_count
    if index.size != X.shape[0]:
        raise ShapeError(f"{X.shape[0]} rows but {index.size} assignments")
    if cfg.mode == "unsupervised":
        known_anomaly = None
    y_real, p_real = real_targets(index, known_anomaly, J, cfg.mode)

    _, rng = _rngs(cfg.seed)
    params = model.detector_params()
    state = AdamState(lr=cfg.lr)
    n, d = X.shape
    p_noise_row = anomaly_target(J)
    history = []
    for epoch in range(cfg.epochs_detector):
        perm = rng.permutation(n)
        tot_alarm = tot_gate = 0.0
        batches = 0
        for s in range(0, n, cfg.batch_size):
            rows = perm[s : s + cfg.batch_size]
            m = max(1, int(round(cfg.noise_ratio * rows.size)))
            noise = sample_noise(d, m, rng)
            Xb = np.concatenate([X[rows], noise])
            yb = np.concatenate([y_real[rows], np.ones(m)])
            pb = np.concatenate([p_real[rows], np.tile(p_noise_row, (m, 1))])
            w = np.concatenate([np.full(rows.size, 1.0 / rows.size), np.full(m, 1.0 / m)])
            res = detector_gradients(model, Xb, yb, pb, row_weights=w)
            adam_step(params, res.alarm + res.gate, state)
            tot_alarm += res.alarm_loss
            tot_gate += res.gate_loss
            batches += 1
        rec = {"phase": "detector", "epoch": epoch, "alarm_loss": tot_alarm / batches, "gate_loss": tot_gate / batches}
        history.append(rec)
        if log is not None:
            log(rec)
    return history


def train_argue(model: ArgueModel, X, assignment, cfg: TrainConfig, known_anomaly=None, log=None):
    """Pretrain on rows not labelled anomalous, then train the detector on all rows."""
    X = np.asarray(X, dtype=np.float64)
    index = _as_index(assignment)
    known = np.zeros(X.shape[0], bool) if known_anomaly is None else np.asarray(known_anomaly, bool)
    pre = pretrain(model, X[~known], index[~known], cfg, log=log)
    det = train_detector(model, X, index, cfg, known_anomaly=known, log=log)
    return {"pretrain": pre, "detector": det}


class JsonLinesLog:
    """Append-only per-epoch metrics log, one JSON object per line."""

    def __init__(self, path):
        self._fh = open(path, "w", encoding="utf-8")

    def __call__(self, record):
        self._fh.write(json.dumps(record, sort_keys=True) + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
