"""The three-group stepwise estimation pipeline.

Steps: maximum-likelihood parameters from the control group, sample moment
curves and numeric derivatives from each treated group, pointwise recovery
of the therapy functions through the moment relations, local-regression
smoothing, and a natural cubic spline through the smoothed knots.  Two
orderings are supported, depending on which rate the first treated group's
therapy acts on.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ._quadrature import DEFAULT_SUBDIV
from .errors import ValidationError
from .likelihood import ml_fit_control
from .model import (EPS_DENOM, EPS_V, MomentCurves, recover_death_modifier,
                    recover_growth_modifier, recover_variance_modifier)
from .profiles import TherapyProfile
from .smoothing import loess, numeric_derivative

__all__ = [
    "ORDERINGS",
    "PipelineSettings",
    "FitResult",
    "sample_moment_curves",
    "stepwise_fit",
    "mse_curve",
]

#: which rate the first treated group's therapy modifies
ORDERINGS = ("anti_proliferative_first", "death_induced_first")
_ORDERING_ALIASES = {"apf": "anti_proliferative_first", "dif": "death_induced_first"}

TARGETS = ("C", "D", "V1", "V2")


def canonical_ordering(ordering):
    ordering = _ORDERING_ALIASES.get(ordering, ordering)
    if ordering not in ORDERINGS:
        raise ValidationError(f"unknown ordering {ordering!r}")
    return ordering


@dataclass(frozen=True)
class PipelineSettings:
    """Estimation-pipeline knobs, shared verbatim by bootstrap replicates.

    The rate series (C, D) carry little sampling noise but sharp features,
    so they default to a narrow smoothing window; the variance series carry
    heavy autocorrelated sampling noise, so they default to a much wider
    one.  Robustness iterations are off by default: on knee-shaped rate
    curves the bisquare step mistakes structure for outliers and inflates
    the error severalfold.
    """

    ordering: str = "anti_proliferative_first"
    relation_form: str = "m2"
    loess_span_rate: float = 0.15
    loess_span_variance: float = 0.5
    loess_degree: int = 2
    loess_iterations: int = 0
    eps_denom: float = EPS_DENOM
    eps_v: float = EPS_V
    quad_subdiv: int = DEFAULT_SUBDIV

    def __post_init__(self):
        object.__setattr__(self, "ordering", canonical_ordering(self.ordering))
        if self.relation_form not in ("m2", "m1u"):
            raise ValidationError("relation_form must be 'm2' or 'm1u'")
        if self.loess_degree not in (1, 2):
            raise ValidationError("loess_degree must be 1 or 2")
        for name in ("loess_span_rate", "loess_span_variance"):
            if not 0 < getattr(self, name) <= 1:
                raise ValidationError(f"{name} must lie in (0, 1]")

    def span_for(self, target):
        return self.loess_span_variance if target.startswith("V") else self.loess_span_rate


@dataclass(frozen=True)
class FitResult:
    """Everything the stepwise pipeline produced."""

    params: "ModelParams"
    grid: np.ndarray
    profiles: dict            # target -> TherapyProfile (grid spline)
    raw: dict                 # target -> pointwise values (NaN at missing)
    smoothed: dict            # target -> loess values at the grid
    missing: dict             # target -> bool mask
    floored: dict             # target -> bool mask (variance targets)
    settings: PipelineSettings
    diagnostics: dict = field(default_factory=dict)

    def profile(self, target):
        return self.profiles[target]

    def group_profiles(self, group):
        """(C, D, V) profile triple of the fitted model for a treated group."""
        zero_c = TherapyProfile.zero("C")
        zero_d = TherapyProfile.zero("D")
        apf = self.settings.ordering == "anti_proliferative_first"
        if group == "g1":
            if apf:
                return self.profiles["C"], zero_d, self.profiles["V1"]
            return zero_c, self.profiles["D"], self.profiles["V1"]
        if group == "g2":
            return self.profiles["C"], self.profiles["D"], self.profiles["V2"]
        raise ValidationError(f"unknown treated group {group!r}")


def sample_moment_curves(panel):
    """Empirical moment curves of a panel: log-means, log of means,
    unbiased log-variances, with numeric derivatives."""
    if panel.n_paths < 2:
        raise ValidationError("moment curves need at least 2 sample paths")
    lx = panel.log_values()
    m1 = lx.mean(axis=0)
    m2 = np.log(panel.values.mean(axis=0))
    u = lx.var(axis=0, ddof=1)
    grid = panel.grid
    return MomentCurves(
        grid=grid,
        m1=m1, m2=m2, u=u,
        dm1=numeric_derivative(grid, m1),
        dm2=numeric_derivative(grid, m2),
        du=numeric_derivative(grid, u),
    )


def _pointwise_estimates(params, curves1, curves2, settings):
    """Raw pointwise therapy-function estimates for both treated groups."""
    form = settings.relation_form
    kw = dict(form=form, eps_denom=settings.eps_denom)
    zero = np.zeros(curves1.grid.size)
    raw, missing, floored = {}, {}, {}
    if settings.ordering == "anti_proliferative_first":
        raw["C"] = recover_growth_modifier(curves1, params, zero, **kw)
        missing["C"] = ~np.isfinite(raw["C"])
        raw["V1"], floored["V1"], missing["V1"] = recover_variance_modifier(
            curves1, params, zero, eps_v=settings.eps_v, **kw)
        raw["D"], missing["D"] = recover_death_modifier(curves2, params, raw["C"], **kw)
        raw["V2"], floored["V2"], missing["V2"] = recover_variance_modifier(
            curves2, params, raw["D"], eps_v=settings.eps_v, **kw)
    else:
        raw["D"], missing["D"] = recover_death_modifier(curves1, params, zero, **kw)
        raw["V1"], floored["V1"], missing["V1"] = recover_variance_modifier(
            curves1, params, raw["D"], eps_v=settings.eps_v, **kw)
        raw["C"] = recover_growth_modifier(curves2, params, raw["D"], **kw)
        missing["C"] = ~np.isfinite(raw["C"])
        raw["V2"], floored["V2"], missing["V2"] = recover_variance_modifier(
            curves2, params, raw["D"], eps_v=settings.eps_v, **kw)
    floored.setdefault("C", np.zeros_like(missing["C"]))
    floored.setdefault("D", np.zeros_like(missing["D"]))
    return raw, missing, floored


def smooth_and_spline(grid, values, missing, settings, span, floor=None):
    """LOESS the pointwise series, floor if asked, and spline the knots."""
    smoothed = loess(grid, values,
                     span=span,
                     degree=settings.loess_degree,
                     iterations=settings.loess_iterations,
                     missing=missing)
    floored = np.zeros(grid.size, dtype=bool)
    if floor is not None:
        floored = smoothed < floor
        smoothed = np.where(floored, floor, smoothed)
    return smoothed, floored


def stepwise_fit(control, g1, g2, settings=None, params=None,
                 g1_curves=None, g2_curves=None):
    """Run the full three-group estimation pipeline.

    `params` short-circuits the control-group likelihood fit, and the
    `g*_curves` arguments replace the sampled moment curves; both exist so
    exact theoretical curves can be pushed through the identical pipeline.
    """
    settings = settings or PipelineSettings()
    diagnostics = {"settings": settings}
    if params is None:
        params, trace = ml_fit_control(control, subdiv=settings.quad_subdiv,
                                       full_output=True)
        diagnostics["control_ml"] = trace
    curves1 = g1_curves if g1_curves is not None else sample_moment_curves(g1)
    curves2 = g2_curves if g2_curves is not None else sample_moment_curves(g2)
    if not np.array_equal(curves1.grid, curves2.grid):
        raise ValidationError("treated groups must share the observation grid")
    if hasattr(control, "grid") and not np.array_equal(control.grid, curves1.grid):
        raise ValidationError("all three panels must share the observation grid")
    grid = curves1.grid

    raw, missing, raw_floored = _pointwise_estimates(params, curves1, curves2, settings)
    profiles, smoothed, smooth_floored = {}, {}, {}
    for target in TARGETS:
        floor = settings.eps_v if target.startswith("V") else None
        sm, fl = smooth_and_spline(grid, raw[target], missing[target], settings,
                                   span=settings.span_for(target), floor=floor)
        smoothed[target] = sm
        smooth_floored[target] = fl
        role = "V" if target.startswith("V") else target
        profiles[target] = TherapyProfile.from_grid(grid, sm, role)
    floored = {t: raw_floored[t] | smooth_floored[t] for t in TARGETS}
    diagnostics["guarded_points"] = {t: int(missing[t].sum()) for t in TARGETS}
    diagnostics["floored_points"] = {t: int(floored[t].sum()) for t in TARGETS}
    return FitResult(params=params, grid=grid, profiles=profiles, raw=raw,
                     smoothed=smoothed, missing=missing, floored=floored,
                     settings=settings, diagnostics=diagnostics)


def refit_profiles(result, replacements):
    """A copy of a fit with some profiles replaced (post-test constants)."""
    profiles = dict(result.profiles)
    for target, profile in replacements.items():
        if target not in TARGETS:
            raise ValidationError(f"unknown therapy target {target!r}")
        profiles[target] = profile
    return replace(result, profiles=profiles)


def mse_curve(fitted, truth):
    """Mean squared pointwise difference of two curves."""
    fitted = np.asarray(fitted, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if fitted.shape != truth.shape:
        raise ValidationError("curves must have equal length")
    return float(np.mean((fitted - truth) ** 2))
