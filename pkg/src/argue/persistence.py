"""Versioned single-file model storage (``.npz`` with a JSON header).

Parameters are stored as raw float64 arrays, so a save/load round trip is
bit-exact.  The header records the model kind, format version, architecture
and seed; arrays are keyed ``<network>/W<i>`` and ``<network>/b<i>`` in layer
order.
"""

import json
import zipfile

import numpy as np

from .baseline import AeBaseline
from .datasets import ScalerState
from .errors import ModelKindError, PersistenceError
from .model import ArgueConfig, ArgueModel
from .nn import LayerSpec, Network

FORMAT = "argue-model"
VERSION = 1


def _net_arrays(prefix, net):
    out = {}
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        out[f"{prefix}/W{i}"] = W
        out[f"{prefix}/b{i}"] = b
    return out


def _net_layers(net):
    return [[s.input_dim, s.output_dim, s.activation] for s in net.layers]


def save_model(path, model, scaler: ScalerState | None = None):
    """Write an ``ArgueModel`` or ``AeBaseline`` to ``path``."""
    if isinstance(model, ArgueModel):
        nets = model.networks()
        header = {"kind": "argue", "config": model.config.to_dict(), "seed": model.seed}
        scaler = scaler if scaler is not None else model.scaler
    elif isinstance(model, AeBaseline):
        nets = {"ae": model.network}
        header = {"kind": "ae", "encoder_dims": model.encoder_dims, "seed": model.seed}
        scaler = scaler if scaler is not None else model.scaler
    else:
        raise TypeError(f"cannot save object of type {type(model).__name__}")
    header.update(
        format=FORMAT,
        version=VERSION,
        networks={name: _net_layers(net) for name, net in nets.items()},
        has_scaler=scaler is not None,
    )
    arrays = {}
    for name, net in nets.items():
        arrays.update(_net_arrays(name, net))
    if scaler is not None:
        arrays["scaler/min"] = scaler.minimum
        arrays["scaler/max"] = scaler.maximum
    arrays["__header__"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def _read(path):
    try:
        with np.load(path, allow_pickle=False) as z:
            arrays = {k: z[k] for k in z.files}
    except (zipfile.BadZipFile, EOFError, ValueError, OSError, KeyError) as exc:
        raise PersistenceError(f"{path}: unreadable model file ({exc})") from exc
    if "__header__" not in arrays:
        raise PersistenceError(f"{path}: missing header")
    try:
        header = json.loads(arrays.pop("__header__").tobytes().decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise PersistenceError(f"{path}: corrupt header") from exc
    if header.get("format") != FORMAT:
        raise PersistenceError(f"{path}: not an {FORMAT} file")
    if header.get("version") != VERSION:
        raise PersistenceError(f"{path}: format version {header.get('version')} unsupported (expected {VERSION})")
    return header, arrays


def _network(name, layers, arrays):
    specs = [LayerSpec(a, b, act) for a, b, act in layers]
    try:
        W = [arrays[f"{name}/W{i}"] for i in range(len(specs))]
        b = [arrays[f"{name}/b{i}"] for i in range(len(specs))]
    except KeyError as exc:
        raise PersistenceError(f"missing parameter array {exc}") from exc
    return Network(specs, W, b)


def load_model(path, expect: str | None = None):
    """Load a model; ``expect`` ('argue' or 'ae') enforces the stored kind."""
    header, arrays = _read(path)
    kind = header.get("kind")
    if expect is not None and kind != expect:
        raise ModelKindError(f"{path} holds a {kind!r} model, expected {expect!r}")
    nets = {name: _network(name, layers, arrays) for name, layers in header["networks"].items()}
    scaler = None
    if header.get("has_scaler"):
        scaler = ScalerState(arrays["scaler/min"], arrays["scaler/max"])
    if kind == "argue":
        config = ArgueConfig(**header["config"])
        experts = [nets[f"expert{j}"] for j in range(config.expert_count)]
        return ArgueModel(nets["encoder"], experts, nets["alarm"], nets["gate"], config, header["seed"], scaler)
    if kind == "ae":
        return AeBaseline(nets["ae"], header["encoder_dims"], scaler, header["seed"])
    raise PersistenceError(f"{path}: unknown model kind {kind!r}")


def load_argue(path) -> ArgueModel:
    return load_model(path, expect="argue")


def load_baseline(path) -> AeBaseline:
    return load_model(path, expect="ae")
