"""Gompertz diffusion tumor-growth modeling with time-dependent therapy effects.

A library and CLI for simulating, estimating and bootstrap-testing a
positive diffusion whose growth rate, death rate and diffusion variance
are modulated by therapy functions C(t), D(t) and V(t).
"""

from .bootstrap import (Hypothesis, ProtocolResult, TestResult, b_test,
                        concatenated_protocol, d_statistic, isolated_test,
                        kde_null)
from .dataio import read_panel_csv, write_panel_csv
from .errors import (EstimationError, GompertzError, NumericError,
                     QuadratureError, SimulationError, ValidationError)
from .estimator import TherapyEstimator
from .inference import (FitResult, PipelineSettings, mse_curve,
                        sample_moment_curves, stepwise_fit)
from .likelihood import (LikelihoodWorkspace, log_likelihood, ml_fit_control,
                         ml_constant_death_shift, ml_constant_growth_shift,
                         ml_constant_variance_scale, psi_integral)
from .model import (ModelParams, MomentCurves, StudyDesign, integrating_factor,
                    mean_variance_x, recover_death_modifier,
                    recover_growth_modifier, recover_variance_modifier,
                    theoretical_moments, transition_law)
from .profiles import TherapyProfile
from .simulate import PathPanel, SimulationConfig, simulate
from .smoothing import loess, numeric_derivative
from .study import (StudySpec, application_1, application_2, case_1, case_2,
                    replicate_mse, simulate_study)

__version__ = "0.1.0"

__all__ = [
    "ModelParams", "TherapyProfile", "StudyDesign", "MomentCurves",
    "PathPanel", "SimulationConfig", "simulate",
    "integrating_factor", "transition_law", "theoretical_moments",
    "mean_variance_x", "recover_growth_modifier", "recover_death_modifier",
    "recover_variance_modifier",
    "numeric_derivative", "loess",
    "LikelihoodWorkspace", "log_likelihood", "ml_fit_control", "psi_integral",
    "ml_constant_growth_shift", "ml_constant_death_shift",
    "ml_constant_variance_scale",
    "PipelineSettings", "FitResult", "stepwise_fit", "sample_moment_curves",
    "mse_curve", "TherapyEstimator",
    "Hypothesis", "TestResult", "ProtocolResult", "d_statistic", "b_test",
    "isolated_test", "concatenated_protocol", "kde_null",
    "StudySpec", "application_1", "application_2", "case_1", "case_2",
    "simulate_study", "replicate_mse",
    "read_panel_csv", "write_panel_csv",
    "GompertzError", "ValidationError", "NumericError", "QuadratureError",
    "EstimationError", "SimulationError",
]
