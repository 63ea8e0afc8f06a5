import numpy as np
import pytest

from gompertz_therapy import (ModelParams, SimulationConfig, StudyDesign,
                              TherapyProfile, simulate)


@pytest.fixture(scope="session")
def params():
    return ModelParams(alpha=0.5, beta=0.2, sigma=0.01)


@pytest.fixture(scope="session")
def design():
    return StudyDesign.uniform(0.0, 50.0, 51, x0=1.0)


@pytest.fixture(scope="session")
def homogeneous():
    return (TherapyProfile.zero("C"), TherapyProfile.zero("D"),
            TherapyProfile.one("V"))


@pytest.fixture(scope="session")
def control_panel(params, design, homogeneous):
    c, d, v = homogeneous
    cfg = SimulationConfig(n_paths=25, seed=7, scheme="exact")
    return simulate(params, c, d, v, design, cfg, label="control")


def homogeneous_m1(params, t, x0=1.0):
    """Closed-form mean of ln X for the unmodulated model."""
    g = params.alpha - 0.5 * params.sigma2
    return np.log(x0) * np.exp(-params.beta * t) + g * (1 - np.exp(-params.beta * t)) / params.beta


def homogeneous_u(params, t):
    """Closed-form variance of ln X for the unmodulated model."""
    return params.sigma2 * (1 - np.exp(-2 * params.beta * t)) / (2 * params.beta)
