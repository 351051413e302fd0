"""PFLEGO: head-only local steps, then the backbone gradient goes to the server.

Per participating client: cache features once, take ``tau - 1`` head-only GD
steps at rate ``beta``, compute the joint gradient (second backbone pass),
step the head by ``rho_t * (I / r) * alpha_i`` times its gradient, and return
the backbone gradient. The server applies ``(I / r) * sum_i alpha_i g_i``.
Together the last head step and the server step form one SGD step over all
parameters.
"""

from __future__ import annotations

from typing import Callable, Mapping, Sequence

from ..data import ClientDataset
from ..errors import ConfigurationError
from ..model import ForwardPassCounter, build_feature_cache, head_loss_and_gradient, joint_gradient
from ..nn import LayerSpec, ParamVector
from ..optim import gd_step
from .base import Algorithm, AlgorithmConfig, Federation, ServerOptimizer


def local_head_steps(cache, head: ParamVector, labels, steps: int, beta: float, theta_version: int) -> ParamVector:
    """``steps`` plain GD updates of the head on cached features."""
    for _ in range(steps):
        cache.require_current(theta_version)
        _, grad = head_loss_and_gradient(cache.features, head, labels)
        head = gd_step(head, grad, beta)
    return head


def pflego_client_round(
    specs: Sequence[LayerSpec],
    theta: ParamVector,
    theta_version: int,
    head: ParamVector,
    data: ClientDataset,
    cfg: AlgorithmConfig,
    rate: float,
    scale: float,
    counter: ForwardPassCounter | None = None,
) -> tuple[ParamVector, ParamVector]:
    """Returns ``(new_head, g_i)``; ``g_i`` is taken before the final head step."""
    cid = data.client_id
    cache = build_feature_cache(specs, theta, theta_version, data.train, counter, cid)
    head = local_head_steps(cache, head, data.train.labels, cfg.tau - 1, cfg.beta, theta_version)
    grad_head, grad_theta, _ = joint_gradient(specs, theta, head, data.train, counter, cid)
    step = scaled_head_gradient(grad_head, data.alpha, scale, cfg.alpha_in_head_update)
    head = gd_step(head, step, rate)
    return head, grad_theta.check_finite("client gradient")


def scaled_head_gradient(grad_head: ParamVector, alpha: float, scale: float, include_alpha: bool = True) -> ParamVector:
    """The head's share of the stochastic gradient: ``(I / r) * alpha_i * grad``.

    With ``include_alpha=False`` the ``alpha_i`` factor is dropped.
    """
    weight = scale * alpha if include_alpha else scale
    return grad_head.with_values(weight * grad_head.values)


def assemble_theta_gradient(
    returns: Mapping[int, ParamVector], alphas: Mapping[int, float] | Sequence[float], scale: float
) -> ParamVector:
    """``scale * sum_i alpha_i g_i``, summed in ascending client order."""
    if not returns:
        raise ConfigurationError("no client gradients to aggregate")
    ids = sorted(returns)
    first = returns[ids[0]]
    total = first.zeros_like().values
    for cid in ids:
        first.require_layout(returns[cid], f"gradient from client {cid}")
        total = total + alphas[cid] * returns[cid].values
    return first.with_values(scale * total)


def pflego_server_aggregate(
    theta: ParamVector,
    returns: Mapping[int, ParamVector],
    alphas,
    scale: float,
    server: ServerOptimizer,
    t: int,
) -> ParamVector:
    """Server step on theta from the participants' gradients; no-op when none returned."""
    if not returns:
        return theta
    return server.apply(theta, assemble_theta_gradient(returns, alphas, scale), t)


class PflegoFederation(Federation):
    algorithm = Algorithm.PFLEGO

    def run_round(self, participants: list[int], pmap: Callable) -> None:
        rate = self.server.rate(self.t)
        scale = self.participation.scale
        theta, version = self.theta, self.theta_version
        heads = {cid: self.head(cid) for cid in participants}

        def work(cid):
            return pflego_client_round(
                self.specs, theta, version, heads[cid], self.datasets[cid], self.cfg, rate, scale, self.counter
            )

        results = dict(zip(participants, pmap(work, participants)))
        for cid in participants:
            self.heads[cid] = results[cid][0]
        grads = {cid: results[cid][1] for cid in participants}
        self.set_theta(pflego_server_aggregate(theta, grads, self.alphas, scale, self.server, self.t))
