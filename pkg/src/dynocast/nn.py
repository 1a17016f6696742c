"""LSTM / MLP building blocks recorded on the autodiff tape.

Parameters live in flat ``{name: float64 array}`` dicts so they can be
serialized, diffed, and fed to the optimizer without any object graph. The
forward functions take a tape plus the node ids of already-registered
parameter leaves and return output node ids.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .autodiff import Tape

CHECKPOINT_VERSION = 1


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_lstm_params(input_size: int, hidden_size: int, rng: np.random.Generator) -> dict:
    """Gate weights/biases drawn uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))."""
    params = {}
    for gate in ("i", "f", "g", "o"):
        params[f"lstm.w_x_{gate}"] = _uniform(rng, input_size, (input_size, hidden_size))
        params[f"lstm.w_h_{gate}"] = _uniform(rng, hidden_size, (hidden_size, hidden_size))
        params[f"lstm.b_{gate}"] = _uniform(rng, hidden_size, (hidden_size,))
    return params


def init_mlp_params(layer_sizes: list, rng: np.random.Generator) -> dict:
    """Affine stack parameters; ``layer_sizes`` like [16, 64, 120]."""
    if len(layer_sizes) < 2:
        raise ValueError("an MLP needs at least one affine layer")
    params = {}
    for k in range(len(layer_sizes) - 1):
        fan_in, fan_out = layer_sizes[k], layer_sizes[k + 1]
        params[f"mlp.w{k}"] = _uniform(rng, fan_in, (fan_in, fan_out))
        params[f"mlp.b{k}"] = _uniform(rng, fan_in, (fan_out,))
    return params


def register_params(tape: Tape, params: dict) -> dict:
    """Create one leaf per parameter array; returns {name: node id}."""
    return {name: tape.leaf(arr) for name, arr in params.items()}


def lstm_forward(tape: Tape, param_ids: dict, inputs: list) -> tuple:
    """Run the LSTM recurrence over per-step input nodes (each (B, F)).

    Returns (final_hidden_id, [per_step_hidden_ids]). Hidden and cell states
    start at zero. Raises ValueError on input-width mismatch.
    """
    if not inputs:
        raise ValueError("lstm_forward needs at least one input step")
    w_x_i = tape.value(param_ids["lstm.w_x_i"])
    input_size, hidden_size = w_x_i.shape
    batch = tape.value(inputs[0]).shape[0]
    for t, node in enumerate(inputs):
        shape = tape.value(node).shape
        if shape != (batch, input_size):
            raise ValueError(f"input step {t} has shape {shape}, expected {(batch, input_size)}")

    h = tape.leaf(np.zeros((batch, hidden_size)))
    c = tape.leaf(np.zeros((batch, hidden_size)))
    hiddens = []
    for x in inputs:
        def gate(name):
            return tape.add(
                tape.add(
                    tape.matmul(x, param_ids[f"lstm.w_x_{name}"]),
                    tape.matmul(h, param_ids[f"lstm.w_h_{name}"]),
                ),
                param_ids[f"lstm.b_{name}"],
            )

        i_g = tape.sigmoid(gate("i"))
        f_g = tape.sigmoid(gate("f"))
        g_g = tape.tanh(gate("g"))
        o_g = tape.sigmoid(gate("o"))
        c = tape.add(tape.mul(f_g, c), tape.mul(i_g, g_g))
        h = tape.mul(o_g, tape.tanh(c))
        hiddens.append(h)
    return h, hiddens


def mlp_forward(tape: Tape, param_ids: dict, x: int) -> int:
    """Affine layers with tanh between them; the last layer stays linear."""
    n_layers = sum(1 for name in param_ids if name.startswith("mlp.w"))
    if n_layers == 0:
        raise ValueError("no MLP parameters registered")
    out = x
    for k in range(n_layers):
        w = param_ids[f"mlp.w{k}"]
        if tape.value(out).shape[1] != tape.value(w).shape[0]:
            raise ValueError(
                f"layer {k} input width {tape.value(out).shape[1]} does not match "
                f"weight shape {tape.value(w).shape}"
            )
        out = tape.add(tape.matmul(out, w), param_ids[f"mlp.b{k}"])
        if k < n_layers - 1:
            out = tape.tanh(out)
    return out


def control_scale_vector(delta_max: float, a_max: float, horizon: int) -> np.ndarray:
    """Per-column output scales for an interleaved (delta, a) control matrix."""
    return np.tile(np.array([delta_max, a_max], dtype=np.float64), horizon)


def bound_controls_array(raw: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Numpy-side bounded activation: omega * tanh(raw), strictly inside (-omega, omega)."""
    omega = np.asarray(omega, dtype=np.float64)
    if np.any(omega <= 0.0):
        raise ValueError("omega must be positive elementwise")
    return omega * np.tanh(np.asarray(raw, dtype=np.float64))


# -- checkpoints -------------------------------------------------------------


def save_checkpoint(path, params: dict, meta: dict | None = None) -> None:
    """Write a versioned JSON checkpoint of named arrays.

    Floats are serialized via repr, so ``load_checkpoint(save_checkpoint(p))``
    reproduces every array bit-exactly.
    """
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "meta": meta or {},
        "arrays": {
            name: {"shape": list(arr.shape), "data": np.asarray(arr, dtype=np.float64).ravel().tolist()}
            for name, arr in sorted(params.items())
        },
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True))


def load_checkpoint(path) -> tuple:
    """Read a checkpoint; returns (params dict, meta dict)."""
    payload = json.loads(Path(path).read_text())
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version!r}")
    params = {
        name: np.array(spec["data"], dtype=np.float64).reshape(spec["shape"])
        for name, spec in payload["arrays"].items()
    }
    return params, payload.get("meta", {})
