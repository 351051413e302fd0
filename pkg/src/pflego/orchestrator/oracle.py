"""Centralized reference optimizer and the unbiasedness checker.

The oracle evolves a full copy of ``psi = (theta, {W_i})`` by exact gradient
descent on the global loss, ignoring federation entirely. With every client
participating, ``tau = 1`` and a plain-SGD server, a PFLEGO round must
reproduce its trajectory.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .. import rng as rngs
from ..data import ClientDataset
from ..fl.participation import Mode, ParticipationConfig, sample_participants
from ..fl.pflego import assemble_theta_gradient, scaled_head_gradient
from ..model import joint_gradient
from ..nn import LayerSpec, ParamVector
from ..optim import gd_step


@dataclass
class OracleState:
    theta: ParamVector
    heads: dict = field(default_factory=dict)

    def copy(self) -> "OracleState":
        return OracleState(self.theta.copy(), {k: v.copy() for k, v in self.heads.items()})


def client_gradients(specs, theta, heads, datasets: Sequence[ClientDataset]) -> dict:
    """Per-client ``(grad_head, grad_theta)`` of the client losses at ``psi``."""
    return {
        d.client_id: joint_gradient(specs, theta, heads[d.client_id], d.train)[:2]
        for d in datasets
    }


def psi_gradient(
    specs: Sequence[LayerSpec], theta: ParamVector, heads: dict, datasets: Sequence[ClientDataset]
) -> tuple[ParamVector, dict]:
    """Exact gradient of the global loss: ``sum_i alpha_i grad_theta l_i`` and ``alpha_i grad_W_i l_i``."""
    grads = client_gradients(specs, theta, heads, datasets)
    g_theta = np.zeros_like(theta.values)
    g_heads = {}
    for d in sorted(datasets, key=lambda d: d.client_id):
        g_head, g_th = grads[d.client_id]
        g_theta = g_theta + d.alpha * g_th.values
        g_heads[d.client_id] = g_head.with_values(d.alpha * g_head.values)
    return theta.with_values(g_theta), g_heads


def centralized_oracle_step(
    oracle: OracleState, specs: Sequence[LayerSpec], datasets: Sequence[ClientDataset], rate: float
) -> OracleState:
    """One full-gradient descent step on every block of ``psi``."""
    g_theta, g_heads = psi_gradient(specs, oracle.theta, oracle.heads, datasets)
    heads = dict(oracle.heads)
    for cid, g in g_heads.items():
        heads[cid] = gd_step(oracle.heads[cid], g, rate)
    return OracleState(gd_step(oracle.theta, g_theta, rate), heads)


def stochastic_gradient(
    grads: dict,
    alphas: dict,
    subset: Sequence[int],
    scale: float,
    theta_template: ParamVector,
) -> tuple[ParamVector, dict]:
    """The federated round's gradient over ``psi`` for a participant set.

    Built with the same assembly helpers the algorithm uses. Non-participants
    contribute zero to the theta block and get a zero head block.
    """
    if subset:
        g_theta = assemble_theta_gradient({i: grads[i][1] for i in subset}, alphas, scale)
    else:
        g_theta = theta_template.zeros_like()
    members = set(subset)
    g_heads = {
        cid: scaled_head_gradient(g_head, alphas[cid], scale) if cid in members else g_head.zeros_like()
        for cid, (g_head, _) in grads.items()
    }
    return g_theta, g_heads


class UnbiasednessResult(NamedTuple):
    max_abs_deviation: float
    block_deviation: dict
    n_subsets: int
    exhaustive: bool
    standard_error: float | None = None


def _flatten(g_theta, g_heads) -> np.ndarray:
    return np.concatenate([g_theta.values] + [g_heads[cid].values for cid in sorted(g_heads)])


def _block_slices(theta, heads):
    out = {"theta": slice(0, theta.values.size)}
    offset = theta.values.size
    for cid in sorted(heads):
        n = heads[cid].values.size
        out[f"W_{cid}"] = slice(offset, offset + n)
        offset += n
    return out


def verify_unbiasedness(
    specs: Sequence[LayerSpec],
    theta: ParamVector,
    heads: dict,
    datasets: Sequence[ClientDataset],
    participation: ParticipationConfig,
    scale: float | None = None,
    max_subsets: int = 10_000,
    mc_draws: int = 100_000,
    seed: int = 0,
) -> UnbiasednessResult:
    """Average the stochastic gradient over the participation law and compare with the exact one.

    Fixed-size participation enumerates every ``r``-subset when there are at
    most ``max_subsets`` of them; binomial participation enumerates all
    ``2**I`` subsets weighted by their probability. Larger problems fall back
    to Monte Carlo and report the largest per-coordinate standard error.
    ``scale`` overrides ``I / r`` (used to check that the checker notices a wrong factor).
    """
    scale = participation.scale if scale is None else scale
    grads = client_gradients(specs, theta, heads, datasets)
    alphas = {d.client_id: d.alpha for d in datasets}
    exact = _flatten(*psi_gradient(specs, theta, heads, datasets))
    blocks = _block_slices(theta, heads)
    n_clients = participation.n_clients

    def draw(subset):
        return _flatten(*stochastic_gradient(grads, alphas, list(subset), scale, theta))

    if participation.mode is Mode.FIXED:
        n_subsets = math.comb(n_clients, participation.count)
        weighted = None
        if n_subsets <= max_subsets:
            subsets = itertools.combinations(range(n_clients), participation.count)
            weighted = ((1.0 / n_subsets, s) for s in subsets)
    else:
        n_subsets = 2**n_clients
        weighted = None
        if n_subsets <= max_subsets:
            p = participation.probability

            def law():
                for size in range(n_clients + 1):
                    w = p**size * (1.0 - p) ** (n_clients - size)
                    for s in itertools.combinations(range(n_clients), size):
                        yield w, s

            weighted = law()

    if weighted is not None:
        mean = np.zeros_like(exact)
        for w, s in weighted:
            mean += w * draw(s)
        dev = np.abs(mean - exact)
        return UnbiasednessResult(
            float(dev.max()), {k: float(dev[sl].max()) for k, sl in blocks.items()}, n_subsets, True
        )

    gen = rngs.stream(seed, rngs.PARTICIPATION)
    total = np.zeros_like(exact)
    total_sq = np.zeros_like(exact)
    for _ in range(mc_draws):
        g = draw(sample_participants(participation, gen))
        total += g
        total_sq += g * g
    mean = total / mc_draws
    var = np.maximum(total_sq / mc_draws - mean**2, 0.0)
    stderr = np.sqrt(var / mc_draws)
    dev = np.abs(mean - exact)
    return UnbiasednessResult(
        float(dev.max()),
        {k: float(dev[sl].max()) for k, sl in blocks.items()},
        mc_draws,
        False,
        float(stderr.max()),
    )
