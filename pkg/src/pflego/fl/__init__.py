"""Federation algorithms behind one interface, plus client participation sampling."""

from .base import Algorithm, AlgorithmConfig, ClientView, Federation, RoundOutcome, ServerMode, ServerOptimizer
from .baselines import (
    FedAvgFederation,
    FedPerFederation,
    FedReconFederation,
    fedavg_aggregate,
    fedavg_client_round,
    fedper_client_round,
    fedrecon_client_round,
)
from .participation import Mode, ParticipationConfig, sample_participants
from .pflego import (
    PflegoFederation,
    assemble_theta_gradient,
    pflego_client_round,
    pflego_server_aggregate,
    scaled_head_gradient,
)

FEDERATIONS = {
    Algorithm.PFLEGO: PflegoFederation,
    Algorithm.FEDAVG: FedAvgFederation,
    Algorithm.FEDPER: FedPerFederation,
    Algorithm.FEDRECON: FedReconFederation,
}


def make_federation(specs, datasets, cfg: AlgorithmConfig, participation: ParticipationConfig, seed: int, **kw):
    return FEDERATIONS[cfg.algorithm](specs, datasets, cfg, participation, seed, **kw)


__all__ = [
    "Algorithm",
    "AlgorithmConfig",
    "ClientView",
    "FEDERATIONS",
    "FedAvgFederation",
    "FedPerFederation",
    "FedReconFederation",
    "Federation",
    "Mode",
    "ParticipationConfig",
    "PflegoFederation",
    "RoundOutcome",
    "ServerMode",
    "ServerOptimizer",
    "assemble_theta_gradient",
    "fedavg_aggregate",
    "fedavg_client_round",
    "fedper_client_round",
    "fedrecon_client_round",
    "make_federation",
    "pflego_client_round",
    "pflego_server_aggregate",
    "sample_participants",
    "scaled_head_gradient",
]
