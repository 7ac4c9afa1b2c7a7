"""Minimal dense-network engine.

Networks are plain containers of weight matrices and bias vectors.  ``forward``
returns a trace holding every hidden activation; ``backward`` walks the trace
in reverse and also accepts gradients injected at hidden layers, which is what
lets a loss that reads activations of one network (the alarm reading an
autoencoder path) push gradients back into it.

All arithmetic is float64.  Weight matrices are stored as ``(input_dim,
output_dim)`` so a batch ``X`` of shape ``(n, input_dim)`` maps through
``X @ W + b``.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ConfigError, ShapeError

ACTIVATIONS = ("leaky_relu", "sigmoid", "softmax", "identity")
LEAKY_SLOPE = 0.01
PROB_EPS = 1e-7


@dataclass(frozen=True)
class LayerSpec:
    input_dim: int
    output_dim: int
    activation: str = "leaky_relu"

    def __post_init__(self):
        if int(self.input_dim) < 1 or int(self.output_dim) < 1:
            raise ConfigError(f"layer dims must be >= 1, got {self.input_dim}->{self.output_dim}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")


def dense_stack(input_dim, widths, final_activation, hidden_activation="leaky_relu"):
    """LayerSpecs for a chain ``input_dim -> widths[0] -> ... -> widths[-1]``."""
    dims = [int(input_dim)] + [int(w) for w in widths]
    if len(dims) < 2:
        raise ConfigError("a network needs at least one layer")
    specs = []
    for i in range(len(dims) - 1):
        act = final_activation if i == len(dims) - 2 else hidden_activation
        specs.append(LayerSpec(dims[i], dims[i + 1], act))
    return specs


class Network:
    """An ordered chain of dense layers."""

    def __init__(self, layers, weights, biases):
        layers = list(layers)
        if not layers:
            raise ConfigError("a network needs at least one layer")
        for i, (a, b) in enumerate(zip(layers, layers[1:])):
            if a.output_dim != b.input_dim:
                raise ConfigError(
                    f"layer {i} outputs {a.output_dim} but layer {i + 1} expects {b.input_dim}"
                )
        for i, spec in enumerate(layers[:-1]):
            if spec.activation == "softmax":
                raise ConfigError(f"softmax is only allowed on the final layer (found on layer {i})")
        if len(weights) != len(layers) or len(biases) != len(layers):
            raise ConfigError("one weight matrix and one bias vector per layer required")
        self.layers = layers
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        for i, (spec, W, b) in enumerate(zip(layers, self.weights, self.biases)):
            if W.shape != (spec.input_dim, spec.output_dim) or b.shape != (spec.output_dim,):
                raise ShapeError(f"layer {i}: parameter shapes {W.shape}, {b.shape} do not match {spec}")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ConfigError(f"layer {i}: non-finite parameters")

    @classmethod
    def initialize(cls, layers, rng):
        """Glorot-uniform weights, zero biases."""
        weights, biases = [], []
        for spec in layers:
            limit = np.sqrt(6.0 / (spec.input_dim + spec.output_dim))
            weights.append(rng.uniform(-limit, limit, size=(spec.input_dim, spec.output_dim)))
            biases.append(np.zeros(spec.output_dim))
        return cls(layers, weights, biases)

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].output_dim

    @property
    def hidden_widths(self) -> list[int]:
        return [spec.output_dim for spec in self.layers[:-1]]

    def params(self) -> list[np.ndarray]:
        """Parameter arrays in declared order: W0, b0, W1, b1, ..."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend((W, b))
        return out

    def copy(self) -> "Network":
        return Network(self.layers, [W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def __repr__(self):
        dims = [self.layers[0].input_dim] + [s.output_dim for s in self.layers]
        return f"Network({'->'.join(map(str, dims))}, out={self.layers[-1].activation})"


@dataclass
class ForwardTrace:
    output: np.ndarray
    hidden_activations: list
    # layer inputs/outputs as 2-D arrays; index 0 is the network input
    _acts: list = field(repr=False, default_factory=list)
    _vector: bool = field(repr=False, default=False)

    @property
    def layer_outputs(self) -> list:
        """Hidden activations followed by the final output."""
        return self.hidden_activations + [self.output]


def _activate(name, z):
    if name == "leaky_relu":
        return _kernels.leaky_relu(z, LEAKY_SLOPE)
    if name == "sigmoid":
        # split on sign to avoid overflow in exp
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    if name == "softmax":
        e = np.exp(z - z.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)
    return z


def _activate_backward(name, a, g):
    """Gradient w.r.t. the pre-activation given the post-activation ``a``."""
    if name == "leaky_relu":
        # a > 0 exactly when z > 0 for a positive slope
        return _kernels.leaky_relu_grad(a, g, LEAKY_SLOPE)
    if name == "sigmoid":
        return g * a * (1.0 - a)
    if name == "softmax":
        return a * (g - np.sum(g * a, axis=1, keepdims=True))
    return g


def forward(net: Network, x) -> ForwardTrace:
    x = np.asarray(x, dtype=np.float64)
    vector = x.ndim == 1
    X = x[None, :] if vector else x
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise ShapeError(f"expected input width {net.input_dim}, got shape {x.shape}")
    acts = [X]
    h = X
    for spec, W, b in zip(net.layers, net.weights, net.biases):
        h = _activate(spec.activation, h @ W + b)
        acts.append(h)
    if vector:
        hidden = [a[0] for a in acts[1:-1]]
        out = acts[-1][0]
    else:
        hidden = acts[1:-1]
        out = acts[-1]
    return ForwardTrace(output=out, hidden_activations=hidden, _acts=acts, _vector=vector)


def backward(net: Network, trace: ForwardTrace, grad_output=None, grad_hidden=None):
    """Reverse pass through ``net``.

    ``grad_output`` is dL/d(output); ``grad_hidden`` optionally gives dL/dh_i for
    each hidden activation (``None`` entries are skipped).  Returns the list of
    parameter gradients aligned with ``net.params()`` and dL/d(input).
    """
    acts = trace._acts
    n = acts[0].shape[0]

    def as2d(g):
        g = np.asarray(g, dtype=np.float64)
        return g[None, :] if g.ndim == 1 else g

    if grad_output is None:
        g = np.zeros((n, net.output_dim))
    else:
        g = as2d(grad_output)
    if g.shape != acts[-1].shape:
        raise ShapeError(f"grad_output shape {g.shape} != output shape {acts[-1].shape}")
    n_hidden = len(net.layers) - 1
    if grad_hidden is not None and len(grad_hidden) != n_hidden:
        raise ShapeError(f"expected {n_hidden} hidden gradients, got {len(grad_hidden)}")

    grads = [None] * (2 * len(net.layers))
    for i in range(len(net.layers) - 1, -1, -1):
        if i < n_hidden and grad_hidden is not None and grad_hidden[i] is not None:
            g = g + as2d(grad_hidden[i])
        dz = _activate_backward(net.layers[i].activation, acts[i + 1], g)
        grads[2 * i] = acts[i].T @ dz
        grads[2 * i + 1] = dz.sum(axis=0)
        g = dz @ net.weights[i].T
    if trace._vector:
        g = g[0]
    return grads, g


# ---------------------------------------------------------------------------
# losses; each returns the mean over samples, *_grad the gradient of that mean
# ---------------------------------------------------------------------------


def _check_same_shape(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")


def loss_bce(y, y_hat, eps=PROB_EPS):
    y = np.asarray(y, dtype=np.float64)
    p = np.clip(np.asarray(y_hat, dtype=np.float64), eps, 1.0 - eps)
    _check_same_shape(y, p)
    return float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))))


def bce_grad(y, y_hat, eps=PROB_EPS):
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    p = np.clip(y_hat, eps, 1.0 - eps)
    g = (-y / p + (1.0 - y) / (1.0 - p)) / max(y.size, 1)
    return np.where(p == y_hat, g, 0.0)


def loss_cce(p, p_hat, eps=PROB_EPS):
    p = np.asarray(p, dtype=np.float64)
    q = np.clip(np.asarray(p_hat, dtype=np.float64), eps, 1.0)
    _check_same_shape(p, q)
    per_row = -np.sum(p * np.log(q), axis=-1)
    return float(np.mean(per_row))


def cce_grad(p, p_hat, eps=PROB_EPS):
    p = np.asarray(p, dtype=np.float64)
    p_hat = np.asarray(p_hat, dtype=np.float64)
    q = np.clip(p_hat, eps, 1.0)
    rows = 1 if p.ndim == 1 else p.shape[0]
    g = -p / q / rows
    return np.where(q == p_hat, g, 0.0)


def loss_mse_recon(x, x_hat):
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    _check_same_shape(x, x_hat)
    return float(np.mean((x_hat - x) ** 2))


def mse_grad(x, x_hat, n_rows=None):
    """Gradient of the mean squared error w.r.t. ``x_hat``.

    ``n_rows`` overrides the row count used for averaging, so a sub-batch can
    contribute to a mean taken over a larger batch.
    """
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    _check_same_shape(x, x_hat)
    if x.ndim == 1:
        return 2.0 * (x_hat - x) / x.size
    rows = x.shape[0] if n_rows is None else n_rows
    return 2.0 * (x_hat - x) / (rows * x.shape[1])


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params, grads, state: AdamState):
    """In-place Adam update with bias correction; returns ``(params, state)``."""
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} parameters but {len(grads)} gradients")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError(f"parameter {p.shape} vs gradient {g.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state
