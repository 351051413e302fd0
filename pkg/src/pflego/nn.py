"""Dense feed-forward substrate with hand-written backpropagation.

Everything here works in float64. Parameters live in a flat
:class:`ParamVector`; per-layer weight and bias arrays are views into it.
A dense layer computes ``act(X @ W + b)`` with ``W`` stored as
``(in_dim, out_dim)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, InputError, NumericError

Shape = tuple[int, ...]


class Activation(str, enum.Enum):
    RELU = "relu"
    IDENTITY = "identity"


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: Activation = Activation.RELU
    has_bias: bool = True

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise ConfigurationError(
                f"layer dimensions must be positive, got {self.in_dim}->{self.out_dim}"
            )
        object.__setattr__(self, "activation", Activation(self.activation))

    def param_shapes(self) -> list[Shape]:
        shapes: list[Shape] = [(self.in_dim, self.out_dim)]
        if self.has_bias:
            shapes.append((self.out_dim,))
        return shapes


def validate_specs(specs: Sequence[LayerSpec]) -> None:
    if not specs:
        raise ConfigurationError("a network needs at least one layer")
    for k, (a, b) in enumerate(zip(specs, specs[1:])):
        if a.out_dim != b.in_dim:
            raise ConfigurationError(
                f"layer {k} outputs {a.out_dim} features but layer {k + 1} expects {b.in_dim}"
            )


def mlp_specs(input_dim: int, hidden: Sequence[int], activation=Activation.RELU) -> list[LayerSpec]:
    """Backbone of ReLU dense layers ``input_dim -> hidden[0] -> ... -> hidden[-1]``."""
    dims = [input_dim, *hidden]
    specs = [LayerSpec(a, b, activation, True) for a, b in zip(dims, dims[1:])]
    validate_specs(specs)
    return specs


class ParamVector:
    """Flat float64 storage plus the ordered shapes of its segments."""

    __slots__ = ("values", "shapes")

    def __init__(self, values, shapes: Sequence[Shape]):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 1:
            raise ConfigurationError("ParamVector values must be one-dimensional")
        shapes = tuple(tuple(int(d) for d in s) for s in shapes)
        expected = sum(int(np.prod(s)) for s in shapes)
        if expected != values.size:
            raise ConfigurationError(
                f"segment sizes add up to {expected} but {values.size} values were given"
            )
        self.values = values
        self.shapes = shapes

    @classmethod
    def zeros(cls, shapes: Sequence[Shape]) -> "ParamVector":
        size = sum(int(np.prod(s)) for s in shapes)
        return cls(np.zeros(size), shapes)

    @classmethod
    def from_arrays(cls, arrays: Sequence[np.ndarray]) -> "ParamVector":
        arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
        if not arrays:
            return cls(np.zeros(0), ())
        return cls(np.concatenate([a.ravel() for a in arrays]), [a.shape for a in arrays])

    @classmethod
    def for_specs(cls, specs: Sequence[LayerSpec]) -> "ParamVector":
        return cls.zeros([s for spec in specs for s in spec.param_shapes()])

    def arrays(self) -> list[np.ndarray]:
        """Views of each segment, reshaped. Writing to them writes to ``values``."""
        out = []
        offset = 0
        for shape in self.shapes:
            n = int(np.prod(shape))
            out.append(self.values[offset : offset + n].reshape(shape))
            offset += n
        return out

    def matrix(self) -> np.ndarray:
        """The single 2-D segment of a head-style vector."""
        if len(self.shapes) != 1 or len(self.shapes[0]) != 2:
            raise ConfigurationError(f"expected a single matrix segment, got shapes {self.shapes}")
        return self.values.reshape(self.shapes[0])

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.shapes)

    def zeros_like(self) -> "ParamVector":
        return ParamVector(np.zeros_like(self.values), self.shapes)

    def with_values(self, values) -> "ParamVector":
        return ParamVector(values, self.shapes)

    def same_layout(self, other: "ParamVector") -> bool:
        return self.shapes == other.shapes

    def require_layout(self, other: "ParamVector", what: str = "parameters") -> None:
        if self.shapes != other.shapes:
            raise ConfigurationError(f"{what}: layout {other.shapes} does not match {self.shapes}")

    def check_finite(self, what: str = "parameters") -> "ParamVector":
        if not np.all(np.isfinite(self.values)):
            raise NumericError(f"{what} contain non-finite values")
        return self

    def split(self, n_head: int) -> tuple["ParamVector", "ParamVector"]:
        """Split off the last ``n_head`` segments as a second vector."""
        shapes_a = self.shapes[: len(self.shapes) - n_head]
        size_a = sum(int(np.prod(s)) for s in shapes_a)
        return (
            ParamVector(self.values[:size_a].copy(), shapes_a),
            ParamVector(self.values[size_a:].copy(), self.shapes[len(shapes_a) :]),
        )

    @staticmethod
    def concat(a: "ParamVector", b: "ParamVector") -> "ParamVector":
        return ParamVector(np.concatenate([a.values, b.values]), a.shapes + b.shapes)

    def __len__(self) -> int:
        return self.values.size

    def __repr__(self) -> str:
        return f"ParamVector(size={self.values.size}, shapes={list(self.shapes)})"


@dataclass(frozen=True)
class Batch:
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if inputs.ndim != 2:
            raise InputError(f"inputs must be an N x D matrix, got shape {inputs.shape}")
        if labels.shape != (inputs.shape[0],):
            raise InputError(f"{labels.shape[0] if labels.ndim else 0} labels for {inputs.shape[0]} inputs")
        if inputs.shape[0] < 1:
            raise InputError("a batch needs at least one sample")
        if labels.min() < 0:
            raise InputError("labels must be non-negative")
        inputs.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.inputs.shape[0]


def _layer_params(theta: ParamVector, specs: Sequence[LayerSpec]):
    validate_specs(specs)
    expected = tuple(s for spec in specs for s in spec.param_shapes())
    if theta.shapes != expected:
        raise ConfigurationError(f"theta layout {theta.shapes} does not match layers {expected}")
    arrays = iter(theta.arrays())
    out = []
    for spec in specs:
        w = next(arrays)
        b = next(arrays) if spec.has_bias else None
        out.append((w, b))
    return out


def _forward_trace(theta, specs, inputs):
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != specs[0].in_dim:
        raise ConfigurationError(
            f"input of shape {inputs.shape} does not fit first layer in_dim={specs[0].in_dim}"
        )
    params = _layer_params(theta, specs)
    layer_inputs = []
    pre_acts = []
    h = inputs
    # non-finite values are caught below, so numpy's own warnings are redundant
    with np.errstate(invalid="ignore", over="ignore"):
        for spec, (w, b) in zip(specs, params):
            layer_inputs.append(h)
            z = h @ w
            if b is not None:
                z = z + b
            pre_acts.append(z)
            h = np.maximum(z, 0.0) if spec.activation is Activation.RELU else z
    if not np.all(np.isfinite(h)):
        raise NumericError("forward pass produced non-finite features")
    return h, (params, layer_inputs, pre_acts)


def _backward_trace(specs, trace, upstream) -> ParamVector:
    params, layer_inputs, pre_acts = trace
    grads: list[np.ndarray] = []
    delta = upstream
    for spec, (w, b), x, z in reversed(list(zip(specs, params, layer_inputs, pre_acts))):
        if spec.activation is Activation.RELU:
            # subgradient at exactly zero is taken as 0
            delta = delta * (z > 0.0)
        layer = [x.T @ delta]
        if b is not None:
            layer.append(delta.sum(axis=0))
        grads.extend(reversed(layer))
        delta = delta @ w.T
    grads.reverse()
    return ParamVector.from_arrays(grads)


def forward_features(theta: ParamVector, specs: Sequence[LayerSpec], inputs) -> np.ndarray:
    """Feature matrix (N x M) of the backbone for every input row."""
    features, _ = _forward_trace(theta, specs, inputs)
    return features


def forward_with_trace(theta: ParamVector, specs: Sequence[LayerSpec], inputs):
    """Like :func:`forward_features` but also returns the trace :func:`backward_from_trace` needs."""
    return _forward_trace(theta, specs, inputs)


def backward_from_trace(specs: Sequence[LayerSpec], trace, upstream) -> ParamVector:
    upstream = np.asarray(upstream, dtype=np.float64)
    expected = trace[2][-1].shape
    if upstream.shape != expected:
        raise ConfigurationError(f"upstream shape {upstream.shape} does not match features {expected}")
    return _backward_trace(specs, trace, upstream)


def backward(theta: ParamVector, specs: Sequence[LayerSpec], inputs, upstream) -> ParamVector:
    """Gradient of ``sum(upstream * features)`` with respect to ``theta``.

    The forward pass is recomputed; use :func:`forward_with_trace` with
    :func:`backward_from_trace` to reuse one.
    """
    _, trace = _forward_trace(theta, specs, inputs)
    return backward_from_trace(specs, trace, upstream)


def softmax(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels) -> tuple[float, np.ndarray]:
    """Mean cross-entropy of ``labels`` under ``softmax(logits)`` and its logit gradient."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    if n < 1:
        raise InputError("cross-entropy needs at least one row")
    if labels.shape != (n,):
        raise InputError(f"expected {n} labels, got shape {labels.shape}")
    if labels.min() < 0 or labels.max() >= k:
        raise InputError(f"labels must lie in [0, {k}), got range [{labels.min()}, {labels.max()}]")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(log_z - shifted[rows, labels]))
    probs = np.exp(shifted - log_z[:, None])
    probs[rows, labels] -= 1.0
    return loss, probs / n


def finite_difference_check(
    loss_fn: Callable[[ParamVector], float],
    params: ParamVector,
    analytic: ParamVector,
    h: float = 1e-5,
) -> float:
    """Worst relative error between ``analytic`` and central differences of ``loss_fn``."""
    if h <= 0:
        raise ConfigurationError("step size h must be positive")
    params.require_layout(analytic, "analytic gradient")
    probe = params.copy()
    worst = 0.0
    for k in range(probe.values.size):
        orig = probe.values[k]
        probe.values[k] = orig + h
        f_plus = loss_fn(probe)
        probe.values[k] = orig - h
        f_minus = loss_fn(probe)
        probe.values[k] = orig
        numeric = (f_plus - f_minus) / (2.0 * h)
        a = analytic.values[k]
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst


def glorot_uniform(specs: Sequence[LayerSpec], rng: np.random.Generator) -> ParamVector:
    """Symmetric uniform weights with limit sqrt(6 / (fan_in + fan_out)); zero biases."""
    validate_specs(specs)
    arrays = []
    for spec in specs:
        limit = np.sqrt(6.0 / (spec.in_dim + spec.out_dim))
        arrays.append(rng.uniform(-limit, limit, size=(spec.in_dim, spec.out_dim)))
        if spec.has_bias:
            arrays.append(np.zeros(spec.out_dim))
    return ParamVector.from_arrays(arrays)
