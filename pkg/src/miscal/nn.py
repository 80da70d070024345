"""Minimal dense feed-forward engine with exact reverse-mode gradients.

Parameters and feature tensors are stored as float32; arithmetic runs in
float64 and is cast back at the storage boundary. All public operations are
pure, and models are immutable: `sgd_step` returns a new model and never
touches its input, so models can be shared freely across threads.

A tensor throughout this package is a plain numpy float32 ndarray. A single
example is a 1-D vector, a batch stacks examples as rows of a 2-D array;
every operation below accepts either form and mirrors it on output. For a
batch, parameter gradients are the sums of the per-example gradients (scale
the upstream logit gradient to get a mean).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InvalidConfigError, InvalidInputError
from .rand import stream

# Clamp inside log: a saturated softmax can underflow to exact 0 in float.
PROB_FLOOR = 1e-12


def _check_finite(arr, name: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains NaN or Inf values")


def one_hot(labels, num_classes: int) -> np.ndarray:
    """Indicator distribution for `labels`.

    A scalar label yields a length-K vector; an array of labels yields one
    row per label.
    """
    if num_classes < 2:
        raise InvalidInputError("need at least two classes")
    arr = np.asarray(labels)
    if not np.issubdtype(arr.dtype, np.integer):
        raise InvalidInputError("labels must be integers")
    if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
        raise InvalidInputError(f"label out of range [0, {num_classes})")
    out = np.zeros(arr.shape + (num_classes,), dtype=np.float64)
    np.put_along_axis(out, arr[..., None], 1.0, axis=-1)
    return out


def uniform_target(num_classes: int) -> np.ndarray:
    """The maximum-entropy distribution over `num_classes` classes."""
    if num_classes < 2:
        raise InvalidInputError("need at least two classes")
    return np.full(num_classes, 1.0 / num_classes, dtype=np.float64)


def is_prob_vector(y, tol: float = 1e-6) -> bool:
    """True when every component lies in [0, 1] and they sum to 1 within tol."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape[-1] < 2 or not np.all(np.isfinite(y)):
        return False
    in_range = np.all(y >= -tol) and np.all(y <= 1.0 + tol)
    return bool(in_range and np.all(np.abs(y.sum(axis=-1) - 1.0) <= tol))


def softmax(z) -> np.ndarray:
    """Probabilities exp(z - max z) / sum exp(z - max z) along the last axis.

    The shift by the row maximum makes the computation overflow-safe without
    changing the result, so shifted inputs map to identical outputs.
    """
    z64 = np.asarray(z, dtype=np.float64)
    if z64.shape[-1] < 2:
        raise InvalidInputError("softmax needs at least two logits")
    _check_finite(z64, "logits")
    e = np.exp(z64 - z64.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(y, target):
    """Cross entropy in nats against an arbitrary target distribution.

    Probabilities are floored at PROB_FLOOR before the log so saturated
    inputs stay finite. Returns a float for a single distribution, an array
    of per-row values for batched input.
    """
    y64 = np.asarray(y, dtype=np.float64)
    t64 = np.asarray(target, dtype=np.float64)
    if y64.shape[-1] != t64.shape[-1]:
        raise InvalidInputError(
            f"distribution has {y64.shape[-1]} classes, target has {t64.shape[-1]}"
        )
    _check_finite(y64, "probabilities")
    _check_finite(t64, "target")
    values = -np.sum(t64 * np.log(np.maximum(y64, PROB_FLOOR)), axis=-1)
    if y64.ndim == 1 and t64.ndim == 1:
        return float(values)
    return values


@dataclass(frozen=True)
class Model:
    """Dense ReLU stack ending in a linear layer of `num_classes` outputs.

    weights[i] has shape (fan_in, fan_out) and biases[i] shape (fan_out,);
    ReLU follows every layer except the last, whose raw output is the logit
    vector fed to `softmax`. Arrays are coerced to float32 and frozen so a
    constructed model can never be mutated in place.
    """

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        if not self.weights or len(self.weights) != len(self.biases):
            raise InvalidInputError("model needs one bias vector per weight matrix")
        ws, bs = [], []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            w = np.ascontiguousarray(w, dtype=np.float32)
            b = np.ascontiguousarray(b, dtype=np.float32)
            if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
                raise InvalidInputError(
                    f"layer {i}: weight shape {w.shape} and bias shape {b.shape} do not agree"
                )
            if i > 0 and ws[-1].shape[1] != w.shape[0]:
                raise InvalidInputError(
                    f"layer {i}: fan-in {w.shape[0]} does not chain from fan-out {ws[-1].shape[1]}"
                )
            _check_finite(w, f"layer {i} weights")
            _check_finite(b, f"layer {i} bias")
            w.flags.writeable = False
            b.flags.writeable = False
            ws.append(w)
            bs.append(b)
        if ws[-1].shape[1] < 2:
            raise InvalidInputError("final layer must be at least two classes wide")
        object.__setattr__(self, "weights", tuple(ws))
        object.__setattr__(self, "biases", tuple(bs))

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def num_classes(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *(w.shape[1] for w in self.weights))

    @property
    def num_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


class ParamGrads(NamedTuple):
    """Gradients aligned with Model.weights and Model.biases."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]


def init_model(layer_dims, seed: int, hidden_bias: float = 2.0) -> Model:
    """Fresh model with uniform(-a, a) weights, a = sqrt(6 / (fan_in + fan_out)),
    drawn in layer order from the seed's stream.

    Hidden biases start at `hidden_bias` (positive keeps every ReLU active at
    initialization, which also keeps small nets close to affine near the
    data); the output bias starts at zero.
    """
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2:
        raise InvalidConfigError("layer_dims needs at least input and output widths")
    if any(d < 1 for d in dims):
        raise InvalidConfigError("layer widths must be positive")
    if not math.isfinite(hidden_bias):
        raise InvalidConfigError("hidden_bias must be finite")
    rng = stream(seed)
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, (fan_in, fan_out)).astype(np.float32))
        fill = hidden_bias if i < len(dims) - 2 else 0.0
        biases.append(np.full(fan_out, fill, dtype=np.float32))
    return Model(tuple(weights), tuple(biases))


def _as_batch(x, dim: int, name: str) -> tuple[np.ndarray, bool]:
    """Promote 1-D input to a single-row batch; returns (float64 2-D, was_1d)."""
    arr = np.asarray(x)
    if arr.ndim == 1:
        arr = arr[None, :]
        single = True
    elif arr.ndim == 2:
        single = False
    else:
        raise InvalidInputError(f"{name} must be 1-D or 2-D, got {arr.ndim}-D")
    if arr.shape[1] != dim:
        raise InvalidInputError(f"{name} has width {arr.shape[1]}, expected {dim}")
    arr = arr.astype(np.float64)
    _check_finite(arr, name)
    return arr, single


def _pre_activations(model: Model, x2d: np.ndarray) -> list[np.ndarray]:
    """Pre-activation of every layer; the last entry is the logit matrix."""
    pre = []
    a = x2d
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        h = a @ w + b
        pre.append(h)
        if i != last:
            a = np.maximum(h, 0.0)
    return pre


def forward(model: Model, x):
    """Evaluate the network on one example or a batch.

    Returns (logits, probabilities); probabilities are exactly
    softmax(logits). Deterministic: identical inputs give bitwise-identical
    outputs.
    """
    x2d, single = _as_batch(x, model.input_dim, "input")
    z = _pre_activations(model, x2d)[-1]
    if single:
        z = z[0]
    return z, softmax(z)


def _batch_pair(model: Model, x, dl_dz):
    x2d, x_single = _as_batch(x, model.input_dim, "input")
    g2d, g_single = _as_batch(dl_dz, model.num_classes, "logit gradient")
    if x_single != g_single or x2d.shape[0] != g2d.shape[0]:
        raise InvalidInputError(
            f"input rows {x2d.shape[0]} and gradient rows {g2d.shape[0]} do not match"
        )
    return x2d, g2d, x_single


def backprop_to_input(model: Model, x, dl_dz) -> np.ndarray:
    """Chain the upstream logit gradient back to the input.

    Exact reverse-mode product through every layer (ReLU passes the gradient
    where its pre-activation was positive), so the result matches central
    finite differences of any loss whose logit gradient is `dl_dz`.
    """
    x2d, grad, single = _batch_pair(model, x, dl_dz)
    pre = _pre_activations(model, x2d)
    for i in reversed(range(len(model.weights))):
        grad = grad @ model.weights[i].T.astype(np.float64)
        if i > 0:
            grad = grad * (pre[i - 1] > 0.0)
    return grad[0] if single else grad


def backprop_to_params(model: Model, x, dl_dz) -> ParamGrads:
    """Gradient of the loss with respect to every weight and bias.

    For batched input the per-example gradients are summed.
    """
    x2d, grad, _ = _batch_pair(model, x, dl_dz)
    pre = _pre_activations(model, x2d)
    acts = [x2d] + [np.maximum(h, 0.0) for h in pre[:-1]]
    n_layers = len(model.weights)
    d_w: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    d_b: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    for i in reversed(range(n_layers)):
        d_w[i] = acts[i].T @ grad
        d_b[i] = grad.sum(axis=0)
        if i > 0:
            grad = (grad @ model.weights[i].T.astype(np.float64)) * (pre[i - 1] > 0.0)
    return ParamGrads(tuple(d_w), tuple(d_b))


def sgd_step(model: Model, grads: ParamGrads, eta: float) -> Model:
    """One gradient-descent update, theta - eta * grad, as a new model."""
    if not math.isfinite(eta) or eta < 0:
        raise InvalidConfigError(f"learning rate must be finite and >= 0, got {eta}")
    if len(grads.weights) != len(model.weights) or len(grads.biases) != len(model.biases):
        raise InvalidInputError("gradient set does not match the model's layer count")
    new_w, new_b = [], []
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        dw = np.asarray(grads.weights[i], dtype=np.float64)
        db = np.asarray(grads.biases[i], dtype=np.float64)
        if dw.shape != w.shape or db.shape != b.shape:
            raise InvalidInputError(
                f"layer {i}: gradient shapes {dw.shape}/{db.shape} do not match "
                f"parameter shapes {w.shape}/{b.shape}"
            )
        _check_finite(dw, f"layer {i} weight gradient")
        _check_finite(db, f"layer {i} bias gradient")
        new_w.append((w.astype(np.float64) - eta * dw).astype(np.float32))
        new_b.append((b.astype(np.float64) - eta * db).astype(np.float32))
    return Model(tuple(new_w), tuple(new_b))
