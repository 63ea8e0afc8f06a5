"""Canned simulation-study designs and the replication metrics.

The two fully time-varying applications and the two constant-truth cases
used throughout the simulation studies are constructed here, together with
the per-replication mean-squared-error table comparing fitted therapy
functions (and the implied mean/variance curves) against the truth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .inference import PipelineSettings, mse_curve, stepwise_fit
from .model import ModelParams, StudyDesign, mean_variance_x, theoretical_moments
from .profiles import TherapyProfile
from .simulate import SimulationConfig, simulate

__all__ = ["StudySpec", "application_1", "application_2", "case_1", "case_2",
           "simulate_study", "replicate_mse", "MSE_KEYS"]

MSE_KEYS = ("C", "V1", "D", "V2", "E1", "Var1", "E2", "Var2")


@dataclass(frozen=True)
class StudySpec:
    """Ground truth of one simulated three-group study."""

    params: ModelParams
    design: StudyDesign
    g1_profiles: tuple  # (C, D, V) of the first treated group
    g2_profiles: tuple  # (C, D, V) of the second treated group
    ordering: str
    n_control: int = 25
    n_g1: int = 25
    n_g2: int = 25

    def group_profiles(self, group):
        if group == "control":
            return (TherapyProfile.zero("C"), TherapyProfile.zero("D"),
                    TherapyProfile.one("V"))
        if group == "g1":
            return self.g1_profiles
        if group == "g2":
            return self.g2_profiles
        raise ValidationError(f"unknown group {group!r}")


def _default_design():
    return StudyDesign.uniform(0.0, 50.0, 51, x0=1.0)


def _default_params():
    return ModelParams(alpha=0.5, beta=0.2, sigma=0.01)


def _linear_c():
    return TherapyProfile.linear(0.005, "C")


def _bump_d():
    return TherapyProfile.rational_bump(-0.12, 50.0, 10.0, "D")


def _bump_v(scale):
    return TherapyProfile.lognormal_bump(0.7, scale, 3.0, 0.5, "V")


def application_1():
    """Linear anti-proliferative therapy first, death-induced bump second."""
    return StudySpec(
        params=_default_params(), design=_default_design(),
        g1_profiles=(_linear_c(), TherapyProfile.zero("D"), _bump_v(10.0)),
        g2_profiles=(_linear_c(), _bump_d(), _bump_v(15.0)),
        ordering="anti_proliferative_first",
    )


def application_2():
    """Death-induced bump therapy first, linear anti-proliferative second."""
    return StudySpec(
        params=_default_params(), design=_default_design(),
        g1_profiles=(TherapyProfile.zero("C"), _bump_d(), _bump_v(10.0)),
        g2_profiles=(_linear_c(), _bump_d(), _bump_v(10.0)),
        ordering="death_induced_first",
    )


def case_1():
    """Null truth: no therapy effect on either rate or the variance."""
    zero_c, zero_d = TherapyProfile.zero("C"), TherapyProfile.zero("D")
    one_v = TherapyProfile.one("V")
    return StudySpec(
        params=_default_params(), design=_default_design(),
        g1_profiles=(zero_c, zero_d, one_v),
        g2_profiles=(zero_c, zero_d, one_v),
        ordering="anti_proliferative_first",
    )


def case_2():
    """Constant truth: C = 0.025, V1 = 0.49, D = -0.05, V2 = 0.49."""
    zero_c, zero_d = TherapyProfile.zero("C"), TherapyProfile.zero("D")
    return StudySpec(
        params=_default_params(), design=_default_design(),
        g1_profiles=(TherapyProfile.constant(0.025, "C"), zero_d,
                     TherapyProfile.constant(0.49, "V")),
        g2_profiles=(TherapyProfile.constant(0.025, "C"),
                     TherapyProfile.constant(-0.05, "D"),
                     TherapyProfile.constant(0.49, "V")),
        ordering="anti_proliferative_first",
    )


def simulate_study(spec, seed, scheme="exact", substeps=16):
    """Simulate the three panels of a study under its ground truth."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = ss.spawn(3)
    panels = {}
    for child, group, n in zip(children, ("control", "g1", "g2"),
                               (spec.n_control, spec.n_g1, spec.n_g2)):
        c, d, v = spec.group_profiles(group)
        cfg = SimulationConfig(n_paths=n, seed=child, scheme=scheme, substeps=substeps)
        panels[group] = simulate(spec.params, c, d, v, spec.design, cfg, label=group)
    return panels["control"], panels["g1"], panels["g2"]


def _true_targets(spec):
    c1, _, v1 = spec.g1_profiles
    c2, d2, v2 = spec.g2_profiles
    if spec.ordering == "anti_proliferative_first":
        return {"C": c1, "D": d2, "V1": v1, "V2": v2}
    _, d1, _ = spec.g1_profiles
    return {"C": c2, "D": d1, "V1": v1, "V2": v2}


def replicate_mse(spec, seed, settings=None):
    """One replication: simulate, fit, and score every fitted curve.

    Returns mean squared errors over the grid for the four therapy
    functions and for the mean and variance curves of both treated groups.
    """
    settings = settings or PipelineSettings(ordering=spec.ordering)
    if settings.ordering != spec.ordering:
        raise ValidationError("pipeline ordering must match the study spec")
    control, g1, g2 = simulate_study(spec, seed)
    fit = stepwise_fit(control, g1, g2, settings=settings)
    grid = spec.design.grid
    truth = _true_targets(spec)
    out = {t: mse_curve(fit.smoothed[t], truth[t](grid)) for t in truth}
    for idx, (group, panel) in enumerate((("g1", g1), ("g2", g2)), start=1):
        tc, td, tv = spec.group_profiles(group)
        true_mean, true_var = mean_variance_x(
            theoretical_moments(spec.params, tc, td, tv, spec.design))
        fc, fd, fv = fit.group_profiles(group)
        fit_mean, fit_var = mean_variance_x(
            theoretical_moments(fit.params, fc, fd, fv, spec.design))
        out[f"E{idx}"] = mse_curve(fit_mean, true_mean)
        out[f"Var{idx}"] = mse_curve(fit_var, true_var)
    return out
