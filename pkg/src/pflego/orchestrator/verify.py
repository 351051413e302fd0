"""Self-checks: oracle equivalence, unbiasedness, gradients and pass accounting.

All of them run on a small seeded federation (four clients, a ``10 -> 8 -> 6``
ReLU backbone, two classes per client) so they finish in seconds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..data import Degree, PersonalizationSpec, SyntheticSpec, build_federation, generate_synthetic
from ..fl import AlgorithmConfig, Mode, ParticipationConfig, PflegoFederation, make_federation
from .. import rng as rngs
from ..model import joint_gradient
from ..reference import client_loss_ext
from ..nn import finite_difference_check, mlp_specs
from .oracle import OracleState, centralized_oracle_step, verify_unbiasedness


def toy_federation(seed: int = 0, n_clients: int = 4, hidden=(8, 6), samples_per_class: int = 24):
    """Seeded High-personalization fixture: ``(specs, datasets)``."""
    n_classes = n_clients
    samples = generate_synthetic(SyntheticSpec(n_classes, 10, samples_per_class, 0.5, seed))
    datasets = build_federation(samples, PersonalizationSpec(Degree.HIGH, n_classes), n_clients, seed)
    return mlp_specs(10, hidden), datasets


def _all_heads(fed):
    return {cid: fed.head(cid).copy() for cid in range(fed.n_clients)}


def psi_deviation(fed, oracle: OracleState) -> float:
    dev = float(np.max(np.abs(fed.theta.values - oracle.theta.values)))
    for cid, head in oracle.heads.items():
        dev = max(dev, float(np.max(np.abs(fed.heads[cid].values - head.values))))
    return dev


def oracle_equivalence(seed: int = 0, rounds: int = 10, rate: float = 0.1) -> float:
    """Largest coordinate gap between PFLEGO (tau=1, everyone, plain SGD) and the oracle over ``rounds``."""
    specs, datasets = toy_federation(seed)
    cfg = AlgorithmConfig("pflego", tau=1, server_mode="sgd", server_rate=rate, alpha_in_head_update=True)
    fed = PflegoFederation(specs, datasets, cfg, ParticipationConfig(len(datasets), Mode.FIXED, count=len(datasets)), seed)
    oracle = OracleState(fed.theta.copy(), _all_heads(fed))
    worst = 0.0
    for _ in range(rounds):
        fed.step()
        oracle = centralized_oracle_step(oracle, specs, datasets, rate)
        worst = max(worst, psi_deviation(fed, oracle))
    return worst


def unbiasedness_suite(seed: int = 0) -> dict:
    """Max deviation for every fixed ``r`` and for binomial participation with p = 0.5."""
    specs, datasets = toy_federation(seed)
    fed = PflegoFederation(specs, datasets, AlgorithmConfig(), ParticipationConfig(len(datasets), count=1), seed)
    heads = _all_heads(fed)
    n = len(datasets)
    out = {}
    for r in range(1, n + 1):
        res = verify_unbiasedness(specs, fed.theta, heads, datasets, ParticipationConfig(n, Mode.FIXED, count=r))
        out[f"fixed r={r}"] = res
    res = verify_unbiasedness(specs, fed.theta, heads, datasets, ParticipationConfig(n, Mode.BINOMIAL, probability=0.5))
    out["binomial p=0.5"] = res
    return out


def with_random_biases(theta, gen, low=-0.5, high=0.5):
    """Copy of ``theta`` with every bias segment redrawn uniformly.

    Zero biases make some ReLU pre-activations exactly 0 (all upstream units
    dead), where the loss has a kink and finite differences are meaningless.
    """
    theta = theta.copy()
    for arr, shape in zip(theta.arrays(), theta.shapes):
        if len(shape) == 1:
            arr[:] = gen.uniform(low, high, shape)
    return theta


def gradient_check(seed: int = 0, h: float = 1e-5) -> float:
    """Worst relative error of analytic gradients vs. central differences of an
    independent extended-precision loss, over every backbone and head coordinate."""
    specs, datasets = toy_federation(seed)
    fed = PflegoFederation(specs, datasets, AlgorithmConfig(), ParticipationConfig(len(datasets), count=1), seed)
    theta = with_random_biases(fed.theta, rngs.stream(seed, rngs.THETA_INIT, 1))
    worst = 0.0
    for d in datasets:
        head = fed.head(d.client_id)
        x, y = d.train.inputs, d.train.labels
        g_head, g_theta, _ = joint_gradient(specs, theta, head, d.train)
        worst = max(
            worst,
            float(finite_difference_check(lambda th: client_loss_ext(specs, th, head, x, y), theta, g_theta, h)),
            float(finite_difference_check(lambda w: client_loss_ext(specs, theta, w, x, y), head, g_head, h)),
        )
    return worst


def forward_pass_counts(seed: int = 0, taus=(1, 5, 50)) -> dict:
    """Backbone passes per participating client in one round, by algorithm and tau."""
    specs, datasets = toy_federation(seed)
    n = len(datasets)
    out = {}
    for alg in ("pflego", "fedrecon", "fedavg", "fedper"):
        for tau in taus:
            fed = make_federation(specs, datasets, AlgorithmConfig(alg, tau=tau), ParticipationConfig(n, count=n), seed)
            outcome = fed.step()
            out[(alg, tau)] = sorted(set(outcome.forward_passes.values()))
    return out


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


def run_checks(seed: int = 0) -> list[Check]:
    checks: list[Check] = []

    def add(name: str, fn: Callable[[], tuple[bool, str]]):
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failed check, not a crashed tool
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        checks.append(Check(name, ok, detail))

    def oracle():
        dev = oracle_equivalence(seed)
        return dev < 1e-12, f"max deviation {dev:.3e} over 10 rounds (tol 1e-12)"

    def unbiased():
        results = unbiasedness_suite(seed)
        worst = max(r.max_abs_deviation for r in results.values())
        return worst < 1e-12, f"max deviation {worst:.3e} across {len(results)} participation laws (tol 1e-12)"

    def grads():
        err = gradient_check(seed)
        return bool(err < 1e-6), f"max relative error {err:.3e} (tol 1e-6)"

    def passes():
        counts = forward_pass_counts(seed)
        bad = [
            f"{alg} tau={tau}: {c}"
            for (alg, tau), c in counts.items()
            if c != ([2] if alg in ("pflego", "fedrecon") else [tau])
        ]
        return not bad, "; ".join(bad) or "2 per PFLEGO/FedRecon client, tau per FedAvg/FedPer client"

    add("exact-SGD oracle equivalence", oracle)
    add("stochastic gradient unbiasedness", unbiased)
    add("finite-difference gradients", grads)
    add("forward-pass accounting", passes)
    return checks
