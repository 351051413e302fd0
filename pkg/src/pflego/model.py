"""Shared backbone plus one linear head per client.

Client ``i`` scores its ``K_i`` local classes with ``logits = phi(x; theta) @ W_i.T``
where ``W_i`` is a ``K_i x M`` matrix. The global objective is the
``alpha``-weighted sum of client losses, ``alpha_i = N_i / sum_j N_j``.
"""

from __future__ import annotations

import threading
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .errors import ConfigurationError, InputError, StateError
from .nn import (
    Batch,
    LayerSpec,
    ParamVector,
    backward_from_trace,
    forward_features,
    forward_with_trace,
    glorot_uniform,
    softmax_cross_entropy,
    validate_specs,
)


class ForwardPassCounter:
    """Counts full backbone evaluations per client within a round."""

    def __init__(self):
        self._lock = threading.Lock()
        self._counts: dict[Hashable, int] = defaultdict(int)

    def record(self, client_id: Hashable, n: int = 1) -> None:
        with self._lock:
            self._counts[client_id] += n

    def reset(self) -> None:
        with self._lock:
            self._counts.clear()

    def get(self, client_id: Hashable) -> int:
        with self._lock:
            return self._counts.get(client_id, 0)

    def snapshot(self) -> dict:
        with self._lock:
            return dict(sorted(self._counts.items()))

    def total(self) -> int:
        with self._lock:
            return sum(self._counts.values())


def _count(counter: ForwardPassCounter | None, client_id) -> None:
    if counter is not None:
        counter.record(client_id)


def _check_head(head: ParamVector, feature_dim: int, n_classes: int | None = None) -> np.ndarray:
    w = head.matrix()
    if w.shape[1] != feature_dim:
        raise ConfigurationError(f"head has {w.shape[1]} columns but features have {feature_dim}")
    if n_classes is not None and w.shape[0] < n_classes:
        raise ConfigurationError(f"head has {w.shape[0]} rows for {n_classes} classes")
    return w


def client_loss(
    specs: Sequence[LayerSpec],
    theta: ParamVector,
    head: ParamVector,
    batch: Batch,
    counter: ForwardPassCounter | None = None,
    client_id: Hashable = None,
) -> float:
    """Mean cross-entropy of one client's data under ``(theta, head)``."""
    phi = forward_features(theta, specs, batch.inputs)
    _count(counter, client_id)
    w = _check_head(head, phi.shape[1])
    loss, _ = softmax_cross_entropy(phi @ w.T, batch.labels)
    return loss


def joint_gradient(
    specs: Sequence[LayerSpec],
    theta: ParamVector,
    head: ParamVector,
    batch: Batch,
    counter: ForwardPassCounter | None = None,
    client_id: Hashable = None,
) -> tuple[ParamVector, ParamVector, float]:
    """Gradients of the client loss w.r.t. the head and the backbone.

    Returns ``(grad_head, grad_theta, loss)``; one forward and one backward pass.
    """
    phi, trace = forward_with_trace(theta, specs, batch.inputs)
    _count(counter, client_id)
    w = _check_head(head, phi.shape[1])
    loss, dlogits = softmax_cross_entropy(phi @ w.T, batch.labels)
    grad_head = ParamVector((dlogits.T @ phi).ravel(), head.shapes)
    grad_theta = backward_from_trace(specs, trace, dlogits @ w)
    return grad_head, grad_theta, loss


@dataclass(frozen=True)
class FeatureCache:
    """Backbone features of one client's inputs at a given theta version."""

    client_id: Hashable
    features: np.ndarray
    theta_version: int

    def require_current(self, version: int) -> None:
        if version != self.theta_version:
            raise StateError(
                f"feature cache for client {self.client_id!r} was built at theta version "
                f"{self.theta_version}, current version is {version}"
            )


def build_feature_cache(
    specs: Sequence[LayerSpec],
    theta: ParamVector,
    theta_version: int,
    batch: Batch,
    counter: ForwardPassCounter | None = None,
    client_id: Hashable = None,
) -> FeatureCache:
    phi = forward_features(theta, specs, batch.inputs)
    _count(counter, client_id)
    phi.setflags(write=False)
    return FeatureCache(client_id, phi, theta_version)


def head_loss_and_gradient(features: np.ndarray, head: ParamVector, labels) -> tuple[float, ParamVector]:
    w = _check_head(head, features.shape[1])
    loss, dlogits = softmax_cross_entropy(features @ w.T, labels)
    return loss, ParamVector((dlogits.T @ features).ravel(), head.shapes)


def head_gradient_cached(
    cache: FeatureCache, head: ParamVector, labels, current_version: int
) -> ParamVector:
    """Head gradient from cached features; no backbone evaluation."""
    cache.require_current(current_version)
    return head_loss_and_gradient(cache.features, head, labels)[1]


def data_weights(sizes: Sequence[int]) -> np.ndarray:
    """``alpha_i = N_i / sum_j N_j``."""
    sizes = np.asarray(sizes, dtype=np.float64)
    if sizes.size == 0:
        raise InputError("federation has no clients")
    if np.any(sizes <= 0):
        raise InputError("every client needs at least one training sample")
    return sizes / sizes.sum()


def init_head(n_classes: int, feature_dim: int, rng: np.random.Generator) -> ParamVector:
    """Head initialized uniformly in [0, 1)."""
    return ParamVector(rng.random(n_classes * feature_dim), [(n_classes, feature_dim)])


@dataclass
class PersonalizedModel:
    """psi = (theta, {W_i}) with a version counter on theta."""

    specs: list[LayerSpec]
    theta: ParamVector
    heads: dict = field(default_factory=dict)
    theta_version: int = 0
    counter: ForwardPassCounter = field(default_factory=ForwardPassCounter)

    def __post_init__(self):
        validate_specs(self.specs)
        expected = tuple(s for spec in self.specs for s in spec.param_shapes())
        if self.theta.shapes != expected:
            raise ConfigurationError(f"theta layout {self.theta.shapes} does not match {expected}")
        for cid, head in self.heads.items():
            _check_head(head, self.feature_dim)

    @classmethod
    def initialize(cls, specs: Sequence[LayerSpec], rng: np.random.Generator) -> "PersonalizedModel":
        return cls(list(specs), glorot_uniform(specs, rng))

    @property
    def feature_dim(self) -> int:
        return self.specs[-1].out_dim

    def set_theta(self, theta: ParamVector) -> None:
        self.theta.require_layout(theta, "new theta")
        self.theta = theta.check_finite("theta")
        self.theta_version += 1

    def features(self, inputs, client_id: Hashable = None) -> np.ndarray:
        phi = forward_features(self.theta, self.specs, inputs)
        _count(self.counter, client_id)
        return phi

    def client_loss(self, client_id: Hashable, batch: Batch) -> float:
        return client_loss(self.specs, self.theta, self.heads[client_id], batch, self.counter, client_id)

    def joint_gradient(self, client_id: Hashable, batch: Batch):
        return joint_gradient(self.specs, self.theta, self.heads[client_id], batch, self.counter, client_id)

    def feature_cache(self, client_id: Hashable, batch: Batch) -> FeatureCache:
        return build_feature_cache(self.specs, self.theta, self.theta_version, batch, self.counter, client_id)

    def head_gradient_cached(self, cache: FeatureCache, head: ParamVector, labels) -> ParamVector:
        return head_gradient_cached(cache, head, labels, self.theta_version)

    def global_loss(self, datasets) -> float:
        return global_loss(self.specs, self.theta, self.heads, datasets, self.counter)


def global_loss(
    specs: Sequence[LayerSpec], theta: ParamVector, heads: dict, datasets, counter=None
) -> float:
    datasets = list(datasets)
    if not datasets:
        raise InputError("federation has no clients")
    alphas = data_weights([len(d.train) for d in datasets])
    total = 0.0
    for a, d in zip(alphas, datasets):
        if d.client_id not in heads:
            raise ConfigurationError(f"client {d.client_id!r} has no head")
        total += a * client_loss(specs, theta, heads[d.client_id], d.train, counter, d.client_id)
    return float(total)
