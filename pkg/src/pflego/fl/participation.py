"""Which clients take part in a round.

Both modes give every client the same marginal inclusion probability
``r / I``: a fixed-size uniform subset of ``r`` clients, or independent
Bernoulli(``p``) inclusion with ``r = I * p``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError


class Mode(str, enum.Enum):
    FIXED = "fixed"
    BINOMIAL = "binomial"


@dataclass(frozen=True)
class ParticipationConfig:
    n_clients: int
    mode: Mode = Mode.FIXED
    count: int | None = None
    probability: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.n_clients < 1:
            raise ConfigurationError("need at least one client")
        if self.mode is Mode.FIXED:
            if self.count is None or not 1 <= self.count <= self.n_clients:
                raise ConfigurationError(f"fixed participation needs 1 <= r <= {self.n_clients}, got {self.count}")
        elif self.probability is None or not 0 < self.probability <= 1:
            raise ConfigurationError(f"binomial participation needs 0 < p <= 1, got {self.probability}")

    @classmethod
    def from_fraction(cls, n_clients: int, fraction: float, mode: Mode | str = Mode.FIXED):
        """``fraction`` of the clients per round: a rounded count, or the inclusion probability."""
        if not 0 < fraction <= 1:
            raise ConfigurationError(f"participation fraction must lie in (0, 1], got {fraction}")
        if Mode(mode) is Mode.FIXED:
            return cls(n_clients, Mode.FIXED, count=max(1, math.floor(fraction * n_clients + 0.5)))
        return cls(n_clients, Mode.BINOMIAL, probability=fraction)

    @property
    def expected_count(self) -> float:
        """``r``: exact for fixed mode, ``I * p`` (possibly fractional) for binomial."""
        if self.mode is Mode.FIXED:
            return float(self.count)
        return self.n_clients * self.probability

    @property
    def inclusion_probability(self) -> float:
        return self.expected_count / self.n_clients

    @property
    def scale(self) -> float:
        """``I / r``, the inverse inclusion probability."""
        return self.n_clients / self.expected_count


def sample_participants(cfg: ParticipationConfig, gen: np.random.Generator) -> list[int]:
    """Sorted ids of this round's participants; may be empty in binomial mode."""
    if cfg.mode is Mode.FIXED:
        picked = gen.choice(cfg.n_clients, size=cfg.count, replace=False)
        return sorted(int(i) for i in picked)
    mask = gen.random(cfg.n_clients) < cfg.probability
    return [int(i) for i in np.flatnonzero(mask)]
