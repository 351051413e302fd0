"""Experiment configuration, the T-round loop, and per-round evaluation."""

from __future__ import annotations

import time
from concurrent.futures import Executor, ThreadPoolExecutor
from contextlib import nullcontext
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .. import rng as rngs
from ..data import (
    ClientDataset,
    Degree,
    PersonalizationSpec,
    SyntheticSpec,
    build_federation,
    generate_synthetic,
    subsample_classes,
)
from ..errors import ConfigurationError, NumericError, PflegoError
from ..fl import AlgorithmConfig, Federation, Mode, ParticipationConfig, make_federation
from ..idx import load_idx
from ..model import client_loss, data_weights
from ..nn import forward_features, mlp_specs


@dataclass(frozen=True)
class IdxSource:
    images: str
    labels: str
    max_per_class: int | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: AlgorithmConfig = field(default_factory=AlgorithmConfig)
    seed: int = 0
    rounds: int = 200
    eval_every: int = 1
    threads: int = 1
    clients: int = 20
    participation_mode: Mode = Mode.FIXED
    participation_rate: float = 0.2
    personalization: Degree = Degree.HIGH
    train_fraction: float = 0.75
    hidden: tuple[int, ...] = (200,)
    synthetic: SyntheticSpec | None = field(default_factory=SyntheticSpec)
    idx: IdxSource | None = None
    window: int = 10

    def __post_init__(self):
        object.__setattr__(self, "participation_mode", Mode(self.participation_mode))
        object.__setattr__(self, "personalization", Degree(self.personalization))
        object.__setattr__(self, "hidden", tuple(self.hidden))
        if self.rounds < 1:
            raise ConfigurationError("rounds must be at least 1")
        if self.eval_every < 1:
            raise ConfigurationError("eval_every must be at least 1")
        if self.threads < 1:
            raise ConfigurationError("threads must be at least 1")
        if (self.synthetic is None) == (self.idx is None):
            raise ConfigurationError("exactly one data source (synthetic or idx) is required")

    def participation(self) -> ParticipationConfig:
        return ParticipationConfig.from_fraction(self.clients, self.participation_rate, self.participation_mode)


@dataclass(frozen=True)
class RoundReport:
    round: int
    global_train_loss: float
    mean_test_accuracy: float
    participants: tuple[int, ...]
    forward_passes: dict
    wall_time: float


def load_class_samples(cfg: ExperimentConfig) -> list[np.ndarray]:
    if cfg.synthetic is not None:
        spec = cfg.synthetic
        if spec.seed is None:
            spec = replace(spec, seed=cfg.seed)
        return generate_synthetic(spec)
    samples = load_idx(cfg.idx.images, cfg.idx.labels)
    if cfg.idx.max_per_class:
        samples = subsample_classes(samples, cfg.idx.max_per_class, rngs.stream(cfg.seed, rngs.SUBSAMPLE))
    return samples


def build_experiment(cfg: ExperimentConfig) -> tuple[list[ClientDataset], Federation]:
    samples = load_class_samples(cfg)
    spec = PersonalizationSpec(cfg.personalization, len(samples))
    datasets = build_federation(samples, spec, cfg.clients, cfg.seed, cfg.train_fraction)
    specs = mlp_specs(samples[0].shape[1], cfg.hidden)
    federation = make_federation(specs, datasets, cfg.algorithm, cfg.participation(), cfg.seed)
    return datasets, federation


def predict(specs, theta, head, inputs) -> np.ndarray:
    """Argmax class per row; ``np.argmax`` breaks ties toward the lowest index."""
    logits = forward_features(theta, specs, inputs) @ head.matrix().T
    return np.argmax(logits, axis=1)


def evaluate(federation: Federation, executor: Executor | None = None) -> tuple[float, float]:
    """Global training loss over every client and the unweighted mean client test accuracy.

    Evaluation passes are not charged to the algorithm's forward-pass counters.
    """
    specs = federation.specs
    ids = list(range(federation.n_clients))
    # heads are created here, on the main thread, for clients never visited yet
    views = [federation.client_view(cid) for cid in ids]

    def one(view):
        loss = client_loss(specs, view.theta, view.head, view.train)
        acc = float(np.mean(predict(specs, view.theta, view.head, view.test.inputs) == view.test.labels))
        return loss, acc

    results = list(executor.map(one, views)) if executor is not None else [one(v) for v in views]
    alphas = data_weights([len(v.train) for v in views])
    loss = 0.0
    for a, (l, _) in zip(alphas, results):
        loss += a * l
    acc = float(np.mean([r[1] for r in results]))
    return float(loss), acc


def run_rounds(
    federation: Federation, rounds: int, eval_every: int = 1, threads: int = 1
) -> list[RoundReport]:
    reports = []
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else nullcontext()
    with pool as executor:
        for t in range(1, rounds + 1):
            start = time.perf_counter()
            try:
                outcome = federation.step(executor)
                if t % eval_every == 0 or t == rounds:
                    loss, acc = evaluate(federation, executor)
                    if not np.isfinite(loss):
                        raise NumericError("global training loss is not finite")
                    reports.append(
                        RoundReport(
                            t,
                            loss,
                            acc,
                            tuple(outcome.participants),
                            outcome.forward_passes,
                            time.perf_counter() - start,
                        )
                    )
            except PflegoError as exc:
                raise type(exc)(f"round {t}: {exc}") from exc
    return reports


def run_experiment(cfg: ExperimentConfig) -> list[RoundReport]:
    """Build the federation described by ``cfg`` and run it for ``cfg.rounds`` rounds."""
    _, federation = build_experiment(cfg)
    return run_rounds(federation, cfg.rounds, cfg.eval_every, cfg.threads)


def final_window(reports: Sequence[RoundReport], window: int = 10) -> dict:
    """Mean and population standard deviation of the last ``window`` evaluated rounds."""
    tail = list(reports)[-window:]
    out = {"window": len(tail), "rounds": [r.round for r in tail]}
    for key in ("global_train_loss", "mean_test_accuracy"):
        vals = np.array([getattr(r, key) for r in tail])
        out[key] = {"mean": float(vals.mean()), "std": float(vals.std())}
    return out
