"""Shared encoder, expert decoders, alarm network and gate with short-cut.

Shapes for a model with ``J`` experts:

* encoder: ``input_dim -> encoder_dims[0] -> ... -> encoder_dims[-1]``
* expert j: ``encoder_dims[-1] -> reversed(encoder_dims) -> input_dim`` (sigmoid)
* alarm: ``bundle_width -> alarm_dims -> 1`` (sigmoid), shared by all experts
* gate: ``sum(encoder_dims) -> gate_dims -> J + 1`` (softmax)

An expert path's activation bundle is every encoder layer output followed by
every hidden (non-final) layer output of the expert.  The last gate entry is
the short-cut and weights a constant anomaly score of 1.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .nn import (
    PROB_EPS,
    ForwardTrace,
    Network,
    backward,
    dense_stack,
    forward,
)


@dataclass
class ArgueConfig:
    input_dim: int
    encoder_dims: list
    expert_count: int = 1
    alarm_dims: list = field(default_factory=lambda: [64, 32])
    gate_dims: list = field(default_factory=lambda: [64, 32])

    def __post_init__(self):
        self.encoder_dims = [int(d) for d in self.encoder_dims]
        self.alarm_dims = [int(d) for d in self.alarm_dims]
        self.gate_dims = [int(d) for d in self.gate_dims]
        self.input_dim = int(self.input_dim)
        self.expert_count = int(self.expert_count)
        self.validate()

    def validate(self):
        if self.input_dim < 1:
            raise ConfigError("input_dim must be >= 1")
        if not self.encoder_dims:
            raise ConfigError("encoder_dims must not be empty")
        if any(d < 1 for d in self.encoder_dims + self.alarm_dims + self.gate_dims):
            raise ConfigError("all layer widths must be >= 1")
        if self.encoder_dims[-1] >= self.input_dim:
            raise ConfigError(
                f"last encoder width {self.encoder_dims[-1]} must be < input_dim {self.input_dim}"
            )
        if self.expert_count < 1:
            raise ConfigError("expert_count must be >= 1")

    @property
    def expert_widths(self) -> list:
        return list(reversed(self.encoder_dims)) + [self.input_dim]

    @property
    def gate_input_width(self) -> int:
        return sum(self.encoder_dims)

    @property
    def alarm_input_width(self) -> int:
        return sum(self.encoder_dims) + sum(self.expert_widths[:-1])

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "encoder_dims": list(self.encoder_dims),
            "expert_count": self.expert_count,
            "alarm_dims": list(self.alarm_dims),
            "gate_dims": list(self.gate_dims),
        }


def encoder_layers(config: ArgueConfig):
    return dense_stack(config.input_dim, config.encoder_dims, "leaky_relu")


def expert_layers(config: ArgueConfig):
    return dense_stack(config.encoder_dims[-1], config.expert_widths, "sigmoid")


@dataclass
class ArgueModel:
    encoder: Network
    experts: list
    alarm: Network
    gate: Network
    config: ArgueConfig
    seed: int | None = None
    # ScalerState fitted on the training normals, when known
    scaler: object = None

    @property
    def expert_count(self) -> int:
        return len(self.experts)

    def networks(self) -> dict:
        out = {"encoder": self.encoder}
        for j, e in enumerate(self.experts):
            out[f"expert{j}"] = e
        out["alarm"] = self.alarm
        out["gate"] = self.gate
        return out

    def ae_params(self) -> list:
        params = list(self.encoder.params())
        for e in self.experts:
            params.extend(e.params())
        return params

    def detector_params(self) -> list:
        return self.alarm.params() + self.gate.params()


def build(config: ArgueConfig, seed=0) -> ArgueModel:
    """Instantiate all four network roles from one seeded generator.

    Draw order is encoder, experts 0..J-1, alarm, gate.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    encoder = Network.initialize(encoder_layers(config), rng)
    experts = [Network.initialize(expert_layers(config), rng) for _ in range(config.expert_count)]
    alarm = Network.initialize(
        dense_stack(config.alarm_input_width, config.alarm_dims + [1], "sigmoid"), rng
    )
    gate = Network.initialize(
        dense_stack(config.gate_input_width, config.gate_dims + [config.expert_count + 1], "softmax"),
        rng,
    )
    return ArgueModel(encoder, experts, alarm, gate, config, seed)


@dataclass
class GatingDistribution:
    p: np.ndarray

    @property
    def expert_weights(self):
        return self.p[..., :-1]

    @property
    def shortcut(self):
        return self.p[..., -1]


@dataclass
class ScoredSample:
    """Per-expert alarm scores, the gate output and the fused score.

    Fields are scalars/vectors for a single input and stacked arrays for a batch.
    """

    expert_scores: np.ndarray
    gating: GatingDistribution
    anomaly_score: np.ndarray


def encode(model: ArgueModel, x) -> ForwardTrace:
    return forward(model.encoder, x)


def encoder_activations(trace: ForwardTrace) -> np.ndarray:
    return np.concatenate(trace.layer_outputs, axis=-1)


def _check_expert(model, j):
    if not 0 <= j < model.expert_count:
        raise IndexError(f"expert index {j} out of range [0, {model.expert_count})")


def expert_trace(model: ArgueModel, j: int, enc: ForwardTrace) -> ForwardTrace:
    _check_expert(model, j)
    return forward(model.experts[j], enc.output)


def path_bundle(enc: ForwardTrace, exp: ForwardTrace) -> np.ndarray:
    return np.concatenate(enc.layer_outputs + exp.hidden_activations, axis=-1)


def expert_forward(model: ArgueModel, j: int, x, enc: ForwardTrace | None = None):
    """Reconstruction of ``x`` by expert ``j`` and that path's activation bundle."""
    _check_expert(model, j)
    if enc is None:
        enc = encode(model, x)
    exp = expert_trace(model, j, enc)
    return exp.output, path_bundle(enc, exp)


def alarm_score(model: ArgueModel, bundle):
    bundle = np.asarray(bundle, dtype=np.float64)
    if bundle.shape[-1] != model.alarm.input_dim:
        raise ShapeError(f"bundle width {bundle.shape[-1]} != alarm input {model.alarm.input_dim}")
    out = forward(model.alarm, bundle).output
    return out[..., 0] if bundle.ndim == 2 else float(out[0])


def gate_forward(model: ArgueModel, enc: ForwardTrace) -> GatingDistribution:
    return GatingDistribution(forward(model.gate, encoder_activations(enc)).output)


def combine_scores(expert_scores, gating) -> np.ndarray:
    """Gate-weighted expert scores plus the short-cut mass."""
    p = gating.p if isinstance(gating, GatingDistribution) else np.asarray(gating, dtype=np.float64)
    s = np.asarray(expert_scores, dtype=np.float64)
    if p.shape[-1] != s.shape[-1] + 1:
        raise ShapeError(f"gate width {p.shape[-1]} != expert count {s.shape[-1]} + 1")
    return np.sum(p[..., :-1] * s, axis=-1) + p[..., -1]


def score(model: ArgueModel, x) -> ScoredSample:
    x = np.asarray(x, dtype=np.float64)
    enc = encode(model, x)
    bundles = []
    for j in range(model.expert_count):
        bundles.append(path_bundle(enc, expert_trace(model, j, enc)))
    if x.ndim == 1:
        scores = forward(model.alarm, np.stack(bundles)).output[:, 0]
    else:
        n = x.shape[0]
        flat = forward(model.alarm, np.concatenate(bundles, axis=0)).output[:, 0]
        scores = flat.reshape(model.expert_count, n).T
    gating = gate_forward(model, enc)
    return ScoredSample(scores, gating, combine_scores(scores, gating))


def anomaly_scores(model: ArgueModel, X, batch_size=4096) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    out = [score(model, X[s : s + batch_size]).anomaly_score for s in range(0, X.shape[0], batch_size)]
    return np.concatenate(out) if out else np.zeros(0)


def gate_outputs(model: ArgueModel, X, batch_size=4096) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    out = [gate_forward(model, encode(model, X[s : s + batch_size])).p for s in range(0, X.shape[0], batch_size)]
    return np.concatenate(out) if out else np.zeros((0, model.expert_count + 1))


# ---------------------------------------------------------------------------
# detector objective and its gradients
# ---------------------------------------------------------------------------


@dataclass
class DetectorGradients:
    alarm_loss: float
    gate_loss: float
    alarm: list
    gate: list
    encoder: list | None = None
    experts: list | None = None


def _split(g, widths):
    return np.split(g, np.cumsum(widths)[:-1], axis=1)


def detector_gradients(model: ArgueModel, X, y, p_target, row_weights=None, full=False):
    """Weighted BCE on the fused score and weighted CCE on the gate output.

    Losses are ``sum_i w_i * loss_i`` with ``w_i = 1/n`` by default.  With
    ``full=False`` (training) alarm gradients come from the BCE term and gate
    gradients from the CCE term only, encoder and experts are left untouched.
    With ``full=True`` every parameter gets the gradient of BCE + CCE, which is
    what finite-difference checks compare against.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n = X.shape[0]
    y = np.asarray(y, dtype=np.float64).reshape(n)
    p_target = np.asarray(p_target, dtype=np.float64).reshape(n, model.expert_count + 1)
    w = np.full(n, 1.0 / n) if row_weights is None else np.asarray(row_weights, dtype=np.float64)
    J = model.expert_count

    enc = encode(model, X)
    exps = [expert_trace(model, j, enc) for j in range(J)]
    stacked = np.concatenate([path_bundle(enc, e) for e in exps], axis=0)
    alarm_trace = forward(model.alarm, stacked)
    s = alarm_trace.output[:, 0].reshape(J, n).T
    gate_trace = forward(model.gate, encoder_activations(enc))
    p_hat = gate_trace.output
    y_hat = np.sum(p_hat[:, :-1] * s, axis=1) + p_hat[:, -1]

    yc = np.clip(y_hat, PROB_EPS, 1.0 - PROB_EPS)
    bce = -(y * np.log(yc) + (1.0 - y) * np.log(1.0 - yc))
    qc = np.clip(p_hat, PROB_EPS, 1.0)
    cce = -np.sum(p_target * np.log(qc), axis=1)
    alarm_loss = float(np.sum(w * bce))
    gate_loss = float(np.sum(w * cce))

    d_yhat = w * (-y / yc + (1.0 - y) / (1.0 - yc))
    d_yhat = np.where(yc == y_hat, d_yhat, 0.0)
    d_p = (w[:, None] * -p_target) / qc
    d_p = np.where(qc == p_hat, d_p, 0.0)
    if full:
        d_p = d_p + d_yhat[:, None] * np.concatenate([s, np.ones((n, 1))], axis=1)

    d_s = d_yhat[:, None] * p_hat[:, :-1]
    alarm_grads, d_bundle = backward(model.alarm, alarm_trace, d_s.T.reshape(-1, 1))
    gate_grads, d_enc_acts = backward(model.gate, gate_trace, d_p)
    result = DetectorGradients(alarm_loss, gate_loss, alarm_grads, gate_grads)
    if not full:
        return result

    enc_widths = model.config.encoder_dims
    exp_hidden = model.experts[0].hidden_widths
    d_enc_layers = _split(d_enc_acts, enc_widths)
    d_latent_from_experts = np.zeros((n, enc_widths[-1]))
    expert_grads = []
    for j in range(J):
        seg = _split(d_bundle[j * n : (j + 1) * n], enc_widths + exp_hidden)
        for i in range(len(enc_widths)):
            d_enc_layers[i] = d_enc_layers[i] + seg[i]
        g_exp, g_in = backward(model.experts[j], exps[j], None, seg[len(enc_widths) :])
        expert_grads.append(g_exp)
        d_latent_from_experts += g_in
    enc_grads, _ = backward(
        model.encoder, enc, d_enc_layers[-1] + d_latent_from_experts, d_enc_layers[:-1]
    )
    result.encoder = enc_grads
    result.experts = expert_grads
    return result
