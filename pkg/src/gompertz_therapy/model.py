"""Exact distributional objects of the modulated Gompertz diffusion.

The process solves

    dX = [(alpha - C(t)) - (beta - D(t)) ln X] X dt + sigma sqrt(V(t)) X dW,

with X(t0) = x0 degenerate.  Its log is Gaussian after scaling by the
integrating factor k(t) = exp(int (beta - D)), which makes every marginal
and transition law lognormal with moments given by one-dimensional
integrals.  This module holds those laws, the moment curves of ln X, and
the algebraic relations that recover C, D and V from the moment curves.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ._quadrature import DEFAULT_SUBDIV, TransitionSet, span_subdiv
from .errors import EstimationError, ValidationError
from .profiles import TherapyProfile

__all__ = [
    "ModelParams",
    "StudyDesign",
    "MomentCurves",
    "integrating_factor",
    "transition_law",
    "theoretical_moments",
    "mean_variance_x",
    "recover_growth_modifier",
    "recover_death_modifier",
    "recover_variance_modifier",
]

#: guard threshold on the death-relation denominator
EPS_DENOM = 1e-6
#: floor applied to negative recovered variance modulators
EPS_V = 1e-8


@dataclass(frozen=True)
class ModelParams:
    """Baseline growth rate, death rate and diffusion scale."""

    alpha: float
    beta: float
    sigma: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0 and self.sigma > 0):
            raise ValidationError("alpha, beta and sigma must all be positive")

    @property
    def sigma2(self):
        return self.sigma * self.sigma


@dataclass(frozen=True)
class StudyDesign:
    """Shared observation grid and the degenerate initial state."""

    grid: np.ndarray
    x0: float = 1.0

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        if grid.ndim != 1 or grid.size < 2:
            raise ValidationError("study grid must be a 1-d array with >= 2 times")
        if np.any(np.diff(grid) <= 0):
            raise ValidationError("study grid must be strictly increasing")
        if not self.x0 > 0:
            raise ValidationError("initial state x0 must be positive")
        object.__setattr__(self, "grid", grid)

    @classmethod
    def uniform(cls, t0, t_end, n_times, x0=1.0):
        return cls(grid=np.linspace(float(t0), float(t_end), int(n_times)), x0=x0)

    @property
    def t0(self):
        return float(self.grid[0])

    @property
    def t_end(self):
        return float(self.grid[-1])

    @property
    def n_times(self):
        return int(self.grid.size)


@dataclass(frozen=True)
class MomentCurves:
    """Sampled moment curves of the process on a grid.

    m1 = E[ln X], m2 = ln E[X], u = Var[ln X], with their derivatives.
    """

    grid: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    u: np.ndarray
    dm1: np.ndarray
    dm2: np.ndarray
    du: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.grid).size
        for name in ("m1", "m2", "u", "dm1", "dm2", "du"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ValidationError(f"moment curve {name} must match the grid length")
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "grid", np.asarray(self.grid, dtype=float))
        if np.any(self.u < -1e-12):
            raise ValidationError("log-state variance curve has negative entries")
        finite = np.isfinite(self.m1) & np.isfinite(self.m2)
        if np.any(self.m2[finite] < self.m1[finite] - 1e-9):
            warnings.warn(
                "m2 < m1 at some grid points; sampled curves violate the "
                "log-mean inequality",
                stacklevel=2,
            )


def integrating_factor(t, tau, beta, D, subdiv=None):
    """kbar(t | tau) = exp(-int_tau^t (beta - D(s)) ds), for tau <= t."""
    if tau > t:
        raise ValidationError("integrating_factor requires tau <= t")
    if t == tau:
        return 1.0
    subdiv = subdiv or span_subdiv(t - tau)
    trans = TransitionSet(TherapyProfile.zero("C"), D, TherapyProfile.one("V"),
                          [tau], [t], subdiv=subdiv)
    return float(trans.kbar(beta)[0])


def transition_law(params, C, D, V, t, s, y, subdiv=None):
    """Lognormal parameters (log-mean, log-variance) of X(t) given X(s) = y."""
    if not y > 0:
        raise ValidationError("conditioning state y must be positive")
    if not s < t:
        raise ValidationError("transition_law requires s < t")
    subdiv = subdiv or span_subdiv(t - s)
    trans = TransitionSet(C, D, V, [s], [t], subdiv=subdiv)
    kbar = trans.kbar(params.beta)[0]
    theta = trans.theta(params.alpha, params.sigma2, params.beta)[0]
    omega = trans.omega(params.beta)[0]
    return kbar * np.log(y) + theta, params.sigma2 * omega


def grid_transitions(params, C, D, V, design, subdiv=DEFAULT_SUBDIV):
    """Per-cell (kbar, theta, omega) along the design grid."""
    trans = TransitionSet(C, D, V, design.grid[:-1], design.grid[1:], subdiv=subdiv)
    return (
        trans.kbar(params.beta),
        trans.theta(params.alpha, params.sigma2, params.beta),
        trans.omega(params.beta),
    )


def theoretical_moments(params, C, D, V, design, subdiv=DEFAULT_SUBDIV):
    """Exact moment curves of the model on the design grid.

    m1 and u are propagated cell by cell through the transition law; the
    derivatives come from the integrand identities
        m1' = (alpha - C - sigma^2 V / 2) - (beta - D) m1,
        u'  = sigma^2 V - 2 (beta - D) u.
    """
    grid = design.grid
    kbar, theta, omega = grid_transitions(params, C, D, V, design, subdiv=subdiv)
    n = grid.size
    m1 = np.empty(n)
    u = np.empty(n)
    m1[0] = np.log(design.x0)
    u[0] = 0.0
    for j in range(n - 1):
        m1[j + 1] = kbar[j] * m1[j] + theta[j]
        u[j + 1] = kbar[j] ** 2 * u[j] + params.sigma2 * omega[j]
    cg = C(grid)
    dg = D(grid)
    vg = V(grid)
    dm1 = (params.alpha - cg - 0.5 * params.sigma2 * vg) - (params.beta - dg) * m1
    du = params.sigma2 * vg - 2.0 * (params.beta - dg) * u
    m2 = m1 + 0.5 * u
    dm2 = dm1 + 0.5 * du
    return MomentCurves(grid=grid, m1=m1, m2=m2, u=u, dm1=dm1, dm2=dm2, du=du)


def mean_variance_x(curves):
    """Mean and variance curves of X from the log-scale moment curves."""
    mean = np.exp(curves.m1 + 0.5 * curves.u)
    var = np.exp(2.0 * curves.m1 + curves.u) * np.expm1(curves.u)
    return mean, var


def _companion_values(companion, grid):
    """Evaluate a companion profile (or accept precomputed grid values)."""
    if isinstance(companion, TherapyProfile):
        return companion(grid)
    arr = np.asarray(companion, dtype=float)
    if arr.shape != grid.shape:
        raise ValidationError("companion values must match the grid length")
    return arr


def recover_growth_modifier(curves, params, D, form="m2", eps_denom=EPS_DENOM):
    """Pointwise C(t_j) from the moment curves and a death companion.

    Denominator-free.  Where the companion D is missing (NaN) its term is
    dropped if the multiplying weight is below eps_denom (exact at t0 with
    x0 = 1) and propagates NaN otherwise.
    """
    d = _companion_values(D, curves.grid)
    if form == "m2":
        weight = 2.0 * curves.m2 - curves.m1
        deriv = curves.dm2
    elif form == "m1u":
        weight = curves.m1 + curves.u
        deriv = curves.dm1 + 0.5 * curves.du
    else:
        raise ValidationError(f"unknown relation form {form!r}")
    term = (params.beta - d) * weight
    term[~np.isfinite(d) & (np.abs(weight) < eps_denom)] = 0.0
    return params.alpha - term - deriv


def recover_death_modifier(curves, params, C, form="m2", eps_denom=EPS_DENOM):
    """Pointwise D(t_j); returns (values, missing_mask).

    Points where the denominator magnitude falls under eps_denom are NaN
    and flagged missing (with x0 = 1 this always happens at t0).
    """
    c = _companion_values(C, curves.grid)
    if form == "m2":
        den = 2.0 * curves.m2 - curves.m1
        num = curves.dm2 - params.alpha + c
    elif form == "m1u":
        den = curves.m1 + curves.u
        num = curves.dm1 + 0.5 * curves.du - params.alpha + c
    else:
        raise ValidationError(f"unknown relation form {form!r}")
    missing = np.abs(den) < eps_denom
    if missing.all():
        raise EstimationError("death-modifier denominator degenerate at every grid point")
    values = np.full_like(den, np.nan)
    ok = ~missing
    values[ok] = params.beta + num[ok] / den[ok]
    return values, missing


def recover_variance_modifier(curves, params, D, form="m2", eps_v=EPS_V,
                              eps_denom=EPS_DENOM):
    """Pointwise V(t_j); returns (values, floored_mask, missing_mask).

    Negative recovered values are floored at eps_v and flagged.  Where the
    companion D is missing, the (beta - D) term is dropped if its weight is
    below eps_denom (exact at t0, where u = 0) and otherwise marks the
    point missing.
    """
    d = _companion_values(D, curves.grid)
    if form == "m2":
        weight = curves.m2 - curves.m1
        base = curves.dm2 - curves.dm1
        scale = 2.0 / params.sigma2
    elif form == "m1u":
        weight = curves.u
        base = curves.du
        scale = 1.0 / params.sigma2
    else:
        raise ValidationError(f"unknown relation form {form!r}")
    term = 2.0 * (params.beta - d) * weight
    d_missing = ~np.isfinite(d)
    negligible = np.abs(weight) < eps_denom
    term[d_missing & negligible] = 0.0
    values = scale * (base + term)
    missing = d_missing & ~negligible
    values[missing] = np.nan
    floored = values < eps_v
    floored &= ~missing
    values[floored] = eps_v
    return values, floored, missing
