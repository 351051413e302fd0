"""State and round loop shared by all federation algorithms."""

from __future__ import annotations

import enum
from abc import ABC, abstractmethod
from concurrent.futures import Executor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .. import rng as rngs
from ..data import ClientDataset
from ..errors import ConfigurationError
from ..model import ForwardPassCounter, init_head
from ..nn import Batch, LayerSpec, ParamVector, glorot_uniform
from ..optim import AdamState, LrSchedule, Schedule, adam_step, gd_step
from .participation import ParticipationConfig, sample_participants


class Algorithm(str, enum.Enum):
    PFLEGO = "pflego"
    FEDAVG = "fedavg"
    FEDPER = "fedper"
    FEDRECON = "fedrecon"


class ServerMode(str, enum.Enum):
    ADAM = "adam"
    SGD = "sgd"


@dataclass(frozen=True)
class AlgorithmConfig:
    algorithm: Algorithm = Algorithm.PFLEGO
    tau: int = 50
    beta: float = 0.007
    server_mode: ServerMode = ServerMode.ADAM
    server_rate: float = 0.001
    schedule: Schedule = Schedule.CONSTANT
    alpha_in_head_update: bool = True
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        object.__setattr__(self, "server_mode", ServerMode(self.server_mode))
        object.__setattr__(self, "schedule", Schedule(self.schedule))
        if self.tau < 1:
            raise ConfigurationError(f"tau must be at least 1, got {self.tau}")
        if not self.beta > 0:
            raise ConfigurationError(f"client rate beta must be positive, got {self.beta}")
        if not self.server_rate > 0:
            raise ConfigurationError(f"server rate must be positive, got {self.server_rate}")
        if self.server_mode is ServerMode.ADAM and self.schedule is not Schedule.CONSTANT:
            raise ConfigurationError("the Adam server uses a constant base rate")

    @property
    def lr_schedule(self) -> LrSchedule:
        return LrSchedule(self.server_rate, self.schedule)


class ServerOptimizer:
    """Applies an aggregated gradient to theta with plain SGD or Adam."""

    def __init__(self, cfg: AlgorithmConfig, theta: ParamVector):
        self.mode = cfg.server_mode
        self.schedule = cfg.lr_schedule
        self.adam = None
        if self.mode is ServerMode.ADAM:
            self.adam = AdamState.like(theta, cfg.server_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)

    def rate(self, t: int) -> float:
        return self.schedule.rate(t)

    def apply(self, theta: ParamVector, grad: ParamVector, t: int) -> ParamVector:
        if self.mode is ServerMode.SGD:
            return gd_step(theta, grad, self.rate(t))
        theta, self.adam = adam_step(self.adam, theta, grad)
        return theta


@dataclass
class ClientView:
    """What evaluation needs for one client: backbone, head, and label-consistent batches."""

    theta: ParamVector
    head: ParamVector
    train: Batch
    test: Batch


@dataclass
class RoundOutcome:
    t: int
    participants: list[int]
    forward_passes: dict


def _serial_map(fn: Callable, items: Sequence):
    return [fn(x) for x in items]


class Federation(ABC):
    """Server plus clients for one algorithm; call :meth:`step` once per round."""

    algorithm: Algorithm

    def __init__(
        self,
        specs: Sequence[LayerSpec],
        datasets: Sequence[ClientDataset],
        cfg: AlgorithmConfig,
        participation: ParticipationConfig,
        seed: int,
        theta: ParamVector | None = None,
    ):
        if participation.n_clients != len(datasets):
            raise ConfigurationError(
                f"participation is set up for {participation.n_clients} clients, data has {len(datasets)}"
            )
        if [d.client_id for d in datasets] != list(range(len(datasets))):
            raise ConfigurationError("client ids must be 0..I-1 in order")
        self.specs = list(specs)
        self.datasets = list(datasets)
        self.cfg = cfg
        self.participation = participation
        self.seed = seed
        self.t = 0
        self.theta_version = 0
        self.heads: dict[int, ParamVector] = {}
        self.counter = ForwardPassCounter()
        self.theta = theta.copy() if theta is not None else self.initial_theta()
        self.server = ServerOptimizer(cfg, self.theta)
        self._participation_rng = rngs.stream(seed, rngs.PARTICIPATION)

    @property
    def n_clients(self) -> int:
        return len(self.datasets)

    @property
    def alphas(self) -> np.ndarray:
        return np.array([d.alpha for d in self.datasets])

    def initial_theta(self) -> ParamVector:
        return glorot_uniform(self.specs, rngs.stream(self.seed, rngs.THETA_INIT))

    def head(self, client_id: int) -> ParamVector:
        """The client's head, created on first use from its own seeded stream."""
        if client_id not in self.heads:
            d = self.datasets[client_id]
            gen = rngs.stream(self.seed, rngs.HEAD_INIT, client_id)
            self.heads[client_id] = init_head(d.n_classes, self.specs[-1].out_dim, gen)
        return self.heads[client_id]

    def set_theta(self, theta: ParamVector) -> None:
        self.theta.require_layout(theta, "theta")
        self.theta = theta.check_finite("theta")
        self.theta_version += 1

    def step(self, executor: Executor | None = None) -> RoundOutcome:
        """Advance one round: sample participants, run client work, aggregate."""
        self.t += 1
        participants = sample_participants(self.participation, self._participation_rng)
        self.counter.reset()
        if participants:
            pmap = executor.map if executor is not None else _serial_map
            self.run_round(participants, lambda fn, items: list(pmap(fn, items)))
        return RoundOutcome(self.t, participants, self.counter.snapshot())

    @abstractmethod
    def run_round(self, participants: list[int], pmap: Callable) -> None:
        """Client updates and server aggregation for a non-empty participant list."""

    def client_view(self, client_id: int) -> ClientView:
        d = self.datasets[client_id]
        return ClientView(self.theta, self.head(client_id), d.train, d.test)
