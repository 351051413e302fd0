"""FedAvg, FedPer and FedRecon."""

from __future__ import annotations

from typing import Callable, Mapping, Sequence

import numpy as np

from .. import rng as rngs
from ..data import ClientDataset
from ..errors import ConfigurationError
from ..model import ForwardPassCounter, build_feature_cache, joint_gradient
from ..nn import Batch, LayerSpec, ParamVector, glorot_uniform
from ..optim import gd_step
from .base import Algorithm, AlgorithmConfig, ClientView, Federation
from .pflego import local_head_steps, pflego_server_aggregate


def fedavg_aggregate(returns: Mapping[int, ParamVector], alphas) -> ParamVector:
    """Weighted mean of the returned parameters, weights renormalized over the participants."""
    if not returns:
        raise ConfigurationError("no client parameters to aggregate")
    ids = sorted(returns)
    weights = np.array([alphas[cid] for cid in ids], dtype=np.float64)
    weights = weights / weights.sum()
    first = returns[ids[0]]
    total = np.zeros_like(first.values)
    for w, cid in zip(weights, ids):
        first.require_layout(returns[cid], f"parameters from client {cid}")
        total = total + w * returns[cid].values
    return first.with_values(total)


def joint_gd_step(specs, theta: ParamVector, head: ParamVector, batch: Batch, beta: float, counter, cid):
    """One simultaneous GD step on backbone and head."""
    grad_head, grad_theta, _ = joint_gradient(specs, theta, head, batch, counter, cid)
    return gd_step(theta, grad_theta, beta), gd_step(head, grad_head, beta)


def fedavg_client_round(
    specs: Sequence[LayerSpec],
    theta: ParamVector,
    batch: Batch,
    cfg: AlgorithmConfig,
    counter: ForwardPassCounter | None = None,
    client_id: int | None = None,
) -> ParamVector:
    """``tau`` full GD steps on a local copy of theta, whose last segment is the shared C-way head."""
    backbone, head = theta.split(1)
    for _ in range(cfg.tau):
        backbone, head = joint_gd_step(specs, backbone, head, batch, cfg.beta, counter, client_id)
    return ParamVector.concat(backbone, head)


def fedper_client_round(
    specs: Sequence[LayerSpec],
    theta: ParamVector,
    head: ParamVector,
    data: ClientDataset,
    cfg: AlgorithmConfig,
    counter: ForwardPassCounter | None = None,
) -> tuple[ParamVector, ParamVector]:
    """``tau`` joint GD steps on the head and a local backbone copy; returns ``(head, theta_i)``."""
    theta = theta.copy()
    for _ in range(cfg.tau):
        theta, head = joint_gd_step(specs, theta, head, data.train, cfg.beta, counter, data.client_id)
    return head, theta


def fedrecon_client_round(
    specs: Sequence[LayerSpec],
    theta: ParamVector,
    theta_version: int,
    head: ParamVector,
    data: ClientDataset,
    cfg: AlgorithmConfig,
    counter: ForwardPassCounter | None = None,
) -> tuple[ParamVector, ParamVector]:
    """``tau`` head-only steps, then the backbone gradient at the final head.

    Unlike PFLEGO there is no extra scaled head step after the gradient.
    """
    cid = data.client_id
    cache = build_feature_cache(specs, theta, theta_version, data.train, counter, cid)
    head = local_head_steps(cache, head, data.train.labels, cfg.tau, cfg.beta, theta_version)
    _, grad_theta, _ = joint_gradient(specs, theta, head, data.train, counter, cid)
    return head, grad_theta.check_finite("client gradient")


class FedAvgFederation(Federation):
    """No personal heads: theta ends with one shared head over all C global classes."""

    algorithm = Algorithm.FEDAVG

    def __init__(self, specs, datasets, cfg, participation, seed, theta=None, n_classes: int | None = None):
        self.n_classes = n_classes or 1 + max(max(d.class_ids) for d in datasets)
        self._global = {
            d.client_id: (
                Batch(d.train.inputs, d.global_labels("train")),
                Batch(d.test.inputs, d.global_labels("test")),
            )
            for d in datasets
        }
        super().__init__(specs, datasets, cfg, participation, seed, theta)

    def initial_theta(self) -> ParamVector:
        gen = rngs.stream(self.seed, rngs.THETA_INIT)
        backbone = glorot_uniform(self.specs, gen)
        m = self.specs[-1].out_dim
        limit = np.sqrt(6.0 / (m + self.n_classes))
        head = gen.uniform(-limit, limit, size=(self.n_classes, m))
        return ParamVector.concat(backbone, ParamVector.from_arrays([head]))

    def run_round(self, participants: list[int], pmap: Callable) -> None:
        theta = self.theta

        def work(cid):
            return fedavg_client_round(self.specs, theta, self._global[cid][0], self.cfg, self.counter, cid)

        returns = dict(zip(participants, pmap(work, participants)))
        self.set_theta(fedavg_aggregate(returns, self.alphas))

    def client_view(self, client_id: int) -> ClientView:
        backbone, head = self.theta.split(1)
        train, test = self._global[client_id]
        return ClientView(backbone, head, train, test)


class FedPerFederation(Federation):
    algorithm = Algorithm.FEDPER

    def run_round(self, participants: list[int], pmap: Callable) -> None:
        theta = self.theta
        heads = {cid: self.head(cid) for cid in participants}

        def work(cid):
            return fedper_client_round(self.specs, theta, heads[cid], self.datasets[cid], self.cfg, self.counter)

        results = dict(zip(participants, pmap(work, participants)))
        for cid in participants:
            self.heads[cid] = results[cid][0]
        self.set_theta(fedavg_aggregate({cid: results[cid][1] for cid in participants}, self.alphas))


class FedReconFederation(Federation):
    algorithm = Algorithm.FEDRECON

    def run_round(self, participants: list[int], pmap: Callable) -> None:
        theta, version = self.theta, self.theta_version
        heads = {cid: self.head(cid) for cid in participants}

        def work(cid):
            return fedrecon_client_round(
                self.specs, theta, version, heads[cid], self.datasets[cid], self.cfg, self.counter
            )

        results = dict(zip(participants, pmap(work, participants)))
        for cid in participants:
            self.heads[cid] = results[cid][0]
        grads = {cid: results[cid][1] for cid in participants}
        self.set_theta(
            pflego_server_aggregate(theta, grads, self.alphas, self.participation.scale, self.server, self.t)
        )
