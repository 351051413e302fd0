from .oracle import (
    OracleState,
    UnbiasednessResult,
    centralized_oracle_step,
    client_gradients,
    psi_gradient,
    stochastic_gradient,
    verify_unbiasedness,
)
from .runner import (
    ExperimentConfig,
    IdxSource,
    RoundReport,
    build_experiment,
    evaluate,
    final_window,
    predict,
    run_experiment,
    run_rounds,
)

__all__ = [
    "ExperimentConfig",
    "IdxSource",
    "OracleState",
    "RoundReport",
    "UnbiasednessResult",
    "build_experiment",
    "centralized_oracle_step",
    "client_gradients",
    "evaluate",
    "final_window",
    "predict",
    "psi_gradient",
    "run_experiment",
    "run_rounds",
    "stochastic_gradient",
    "verify_unbiasedness",
]
