"""Update rules: plain gradient descent and Adam, plus server step-size schedules."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError
from .nn import ParamVector


def gd_step(params: ParamVector, grad: ParamVector, rate: float) -> ParamVector:
    """``params - rate * grad`` as a new vector."""
    params.require_layout(grad, "gradient")
    if not rate > 0:
        raise ConfigurationError(f"learning rate must be positive, got {rate}")
    with np.errstate(over="ignore", invalid="ignore"):
        new = params.values - rate * grad.values
    return params.with_values(new).check_finite("updated parameters")


@dataclass(frozen=True)
class AdamState:
    m: ParamVector
    v: ParamVector
    rate: float
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def like(cls, params: ParamVector, rate: float, beta1=0.9, beta2=0.999, eps=1e-8) -> "AdamState":
        if not rate > 0:
            raise ConfigurationError(f"Adam base rate must be positive, got {rate}")
        return cls(params.zeros_like(), params.zeros_like(), rate, 0, beta1, beta2, eps)


def adam_step(state: AdamState, params: ParamVector, grad: ParamVector) -> tuple[ParamVector, AdamState]:
    """One bias-corrected Adam update. Neither input is modified."""
    params.require_layout(grad, "gradient")
    params.require_layout(state.m, "Adam state")
    g = grad.values
    t = state.t + 1
    with np.errstate(over="ignore", invalid="ignore"):
        m = state.beta1 * state.m.values + (1.0 - state.beta1) * g
        v = state.beta2 * state.v.values + (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        new = params.values - state.rate * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = replace(state, m=state.m.with_values(m), v=state.v.with_values(v), t=t)
    return params.with_values(new).check_finite("updated parameters"), new_state


class Schedule(str, enum.Enum):
    CONSTANT = "constant"
    ROBBINS_MONRO = "robbins_monro"


@dataclass(frozen=True)
class LrSchedule:
    """``rho_t = rho0`` (constant) or ``rho0 / t`` (Robbins-Monro); rounds count from 1."""

    rho0: float
    mode: Schedule = Schedule.CONSTANT

    def __post_init__(self):
        if not self.rho0 > 0:
            raise ConfigurationError(f"base rate must be positive, got {self.rho0}")
        object.__setattr__(self, "mode", Schedule(self.mode))

    def rate(self, t: int) -> float:
        if t < 1:
            raise ConfigurationError("rounds are numbered from 1")
        if self.mode is Schedule.CONSTANT:
            return self.rho0
        return self.rho0 / t
