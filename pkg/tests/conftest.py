import numpy as np
import pytest

from pflego.nn import Activation, LayerSpec, ParamVector, mlp_specs
from pflego.orchestrator.verify import toy_federation, with_random_biases

# acceptance lines collected by test_acceptance.py, echoed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def gen():
    return np.random.default_rng(1234)


@pytest.fixture
def toy():
    """(specs, datasets) of the 4-client, 10 -> 8 -> 6 fixture."""
    return toy_federation(0)


def random_theta(specs, gen, scale=0.5):
    """Dense random backbone, biases included, away from ReLU kinks."""
    theta = ParamVector.for_specs(specs)
    theta.values[:] = gen.normal(0.0, scale, theta.values.size)
    return with_random_biases(theta, gen)


def random_head(k, m, gen, scale=0.5):
    return ParamVector(gen.normal(0.0, scale, k * m), [(k, m)])


def identity_specs(d):
    return [LayerSpec(d, d, Activation.IDENTITY, True)]


__all__ = ["random_theta", "random_head", "identity_specs", "mlp_specs"]
