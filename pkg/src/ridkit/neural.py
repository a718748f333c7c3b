"""Multilayer perceptron regression: forward pass, MSE, Adam, training loop.

The regressors serve two roles: forward surrogates that estimate the mean
response of a noisy process (their held-out error is the per-sample
robustness signal), and the scale/shift subnets inside coupling blocks.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import backend
from .autodiff import Graph, GraphBuilder, value_and_gradients

__all__ = [
    "MlpSpec",
    "MlpParams",
    "AdamState",
    "TrainingError",
    "init_mlp",
    "mlp_forward",
    "mse_loss",
    "init_adam",
    "adam_step",
    "train_regressor",
    "mlp_to_jsonable",
    "mlp_from_jsonable",
]

_ACTIVATIONS = ("tanh", "relu")


class TrainingError(Exception):
    """Training produced a non-finite loss."""


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    output_dim: int
    hidden: tuple[int, ...] = ()
    activation: str = "tanh"

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1 or any(h < 1 for h in self.hidden):
            raise ValueError("all layer widths must be >= 1")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"activation must be one of {_ACTIVATIONS}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @property
    def layer_dims(self) -> tuple[tuple[int, int], ...]:
        dims = (self.input_dim, *self.hidden, self.output_dim)
        return tuple(zip(dims[:-1], dims[1:]))


@dataclass(frozen=True)
class MlpParams:
    spec: MlpSpec
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        expect = self.spec.layer_dims
        if len(self.weights) != len(expect) or len(self.biases) != len(expect):
            raise ValueError("layer count does not match spec")
        for (din, dout), w, b in zip(expect, self.weights, self.biases):
            if w.shape != (din, dout) or b.shape != (1, dout):
                raise ValueError(
                    f"layer shapes {w.shape}/{b.shape} do not chain for ({din}, {dout})"
                )

    def arrays(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out


def init_mlp(spec: MlpSpec, rng: np.random.Generator, zero_final: bool = False) -> MlpParams:
    """Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases.

    zero_final additionally zeroes the last layer, which makes coupling
    blocks start as the identity map.
    """
    weights, biases = [], []
    layer_dims = spec.layer_dims
    for li, (din, dout) in enumerate(layer_dims):
        bound = np.sqrt(6.0 / (din + dout))
        w = rng.uniform(-bound, bound, size=(din, dout))
        if zero_final and li == len(layer_dims) - 1:
            w = np.zeros((din, dout))
        weights.append(w)
        biases.append(np.zeros((1, dout)))
    return MlpParams(spec, tuple(weights), tuple(biases))


def mlp_forward(params: MlpParams, x_batch: np.ndarray) -> np.ndarray:
    x = np.asarray(x_batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.spec.input_dim:
        raise ValueError(f"x_batch shape {x.shape} does not match input_dim {params.spec.input_dim}")
    act = np.tanh if params.spec.activation == "tanh" else lambda v: np.maximum(v, 0.0)
    h = x
    last = len(params.weights) - 1
    for li, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if li != last:
            h = act(h)
    return h


def mse_loss(y_pred: np.ndarray, y_true: np.ndarray) -> tuple[np.ndarray, float]:
    """Per-row sum of squared coordinate differences and their batch mean."""
    a = np.asarray(y_pred, dtype=np.float64)
    b = np.asarray(y_true, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    rows = backend.row_sumsq_diff(a, b)
    return rows, float(rows.mean())


# optimizer ---------------------------------------------------------------------


@dataclass(frozen=True)
class AdamState:
    learning_rate: float = 1e-3
    weight_decay: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    m: tuple[np.ndarray, ...] = ()
    v: tuple[np.ndarray, ...] = ()

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("betas must lie in [0, 1)")
        if self.learning_rate < 0.0:
            raise ValueError("learning_rate must be >= 0")


def init_adam(params: Sequence[np.ndarray], **kwargs) -> AdamState:
    zeros = tuple(np.zeros_like(p) for p in params)
    return AdamState(m=zeros, v=tuple(np.zeros_like(p) for p in params), **kwargs)


def adam_step(
    params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState
) -> tuple[list[np.ndarray], AdamState]:
    """Standard bias-corrected Adam update with decoupled weight decay."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer buffers must align")
    t = state.step_count + 1
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"grad shape {g.shape} does not match param {p.shape}")
        p2, m2, v2 = backend.adam_update(
            p, g, m, v, t,
            state.learning_rate, state.beta1, state.beta2,
            state.epsilon, state.weight_decay,
        )
        new_p.append(p2)
        new_m.append(m2)
        new_v.append(v2)
    return new_p, replace(state, step_count=t, m=tuple(new_m), v=tuple(new_v))


# graph construction -------------------------------------------------------------


def append_mlp_graph(b: GraphBuilder, spec: MlpSpec, x: str, prefix: str) -> str:
    """Adds an MLP to a graph under construction; returns the output node.

    Parameters are registered as '{prefix}.w{i}' / '{prefix}.b{i}'.
    """
    h = x
    last = len(spec.layer_dims) - 1
    for li in range(len(spec.layer_dims)):
        w = b.param(f"{prefix}.w{li}")
        bias = b.param(f"{prefix}.b{li}")
        h = b.badd(b.matmul(h, w), bias)
        if li != last:
            h = b.tanh(h) if spec.activation == "tanh" else b.relu(h)
    return h


def mlp_param_bindings(prefix: str, params: MlpParams) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    for li, (w, bias) in enumerate(zip(params.weights, params.biases)):
        out[f"{prefix}.w{li}"] = w
        out[f"{prefix}.b{li}"] = bias
    return out


def _regression_loss_graph(spec: MlpSpec) -> tuple[Graph, str]:
    b = GraphBuilder()
    x = b.input("x")
    y = b.input("y")
    mean_row = b.input("mean_row")  # (1, batch) of 1/batch entries
    pred = append_mlp_graph(b, spec, x, "mlp")
    diff = b.sub(pred, y)
    rows = b.row_sum(b.mul(diff, diff))
    loss = b.matmul(mean_row, rows, name="loss")
    return b.build(), loss


# training -----------------------------------------------------------------------


def train_regressor(
    spec: MlpSpec,
    train: tuple[np.ndarray, np.ndarray],
    valid: tuple[np.ndarray, np.ndarray] | None,
    epochs: int,
    batch_size: int,
    seed: int,
    learning_rate: float = 1e-3,
    weight_decay: float = 1e-5,
) -> tuple[MlpParams, list[dict]]:
    """Minibatch Adam on batch-mean MSE; reproducible under the seed.

    Returns the parameters from the epoch with the lowest validation MSE
    (the final parameters when no validation set is given) and the
    per-epoch loss trace.
    """
    x_train, y_train = (np.asarray(a, dtype=np.float64) for a in train)
    n = x_train.shape[0]
    if n == 0:
        raise ValueError("training set is empty")
    if x_train.shape[1] != spec.input_dim or y_train.shape[1] != spec.output_dim:
        raise ValueError("training data does not match spec dims")
    rng = np.random.default_rng(seed)
    params = init_mlp(spec, rng)
    arrays = params.arrays()
    names = list(mlp_param_bindings("mlp", params).keys())
    state = init_adam(arrays, learning_rate=learning_rate, weight_decay=weight_decay)
    graph, loss_node = _regression_loss_graph(spec)

    best_arrays = [a.copy() for a in arrays]
    best_valid = np.inf
    trace: list[dict] = []
    for epoch in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            nb = idx.size
            bindings = dict(zip(names, arrays))
            bindings["x"] = x_train[idx]
            bindings["y"] = y_train[idx]
            bindings["mean_row"] = np.full((1, nb), 1.0 / nb)
            loss, grads = value_and_gradients(graph, bindings, loss_node, names)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            epoch_loss += loss * nb
            arrays, state = adam_step(arrays, [grads[nm] for nm in names], state)
        record = {"epoch": epoch, "train_mse": epoch_loss / n}
        if valid is not None and len(valid[0]) > 0:
            params_now = _params_from_arrays(spec, arrays)
            _, vmse = mse_loss(mlp_forward(params_now, valid[0]), np.asarray(valid[1], dtype=np.float64))
            record["valid_mse"] = vmse
            if vmse < best_valid:
                best_valid = vmse
                best_arrays = [a.copy() for a in arrays]
        trace.append(record)
    if valid is None or len(valid[0]) == 0:
        best_arrays = arrays
    return _params_from_arrays(spec, best_arrays), trace


def _params_from_arrays(spec: MlpSpec, arrays: Sequence[np.ndarray]) -> MlpParams:
    weights = tuple(arrays[2 * i] for i in range(len(spec.layer_dims)))
    biases = tuple(arrays[2 * i + 1] for i in range(len(spec.layer_dims)))
    return MlpParams(spec, weights, biases)


# serialization -------------------------------------------------------------------

MLP_FORMAT_VERSION = 1


def mlp_to_jsonable(params: MlpParams) -> dict:
    return {
        "format_version": MLP_FORMAT_VERSION,
        "kind": "mlp-regressor",
        "spec": {
            "input_dim": params.spec.input_dim,
            "output_dim": params.spec.output_dim,
            "hidden": list(params.spec.hidden),
            "activation": params.spec.activation,
        },
        "layers": [
            {"weight": w.ravel().tolist(), "bias": b.ravel().tolist()}
            for w, b in zip(params.weights, params.biases)
        ],
    }


def mlp_from_jsonable(doc: dict) -> MlpParams:
    if doc.get("format_version") != MLP_FORMAT_VERSION:
        raise ValueError(f"unsupported mlp format_version {doc.get('format_version')}")
    s = doc["spec"]
    spec = MlpSpec(s["input_dim"], s["output_dim"], tuple(s["hidden"]), s["activation"])
    weights, biases = [], []
    for (din, dout), layer in zip(spec.layer_dims, doc["layers"]):
        weights.append(np.asarray(layer["weight"], dtype=np.float64).reshape(din, dout))
        biases.append(np.asarray(layer["bias"], dtype=np.float64).reshape(1, dout))
    return MlpParams(spec, tuple(weights), tuple(biases))
