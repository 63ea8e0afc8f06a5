"""Parametric bootstrap tests on the therapy functions.

A hypothesis H0: H(t) = h(t) about one therapy function is scored by the
grid sum of absolute deviations between the fitted function and h.  The
null distribution comes from re-simulating the treated group under the
H0 model (h in the target slot, fitted quantities elsewhere) and pushing
every replicate through the identical estimation pipeline.  Replicates
draw from per-replicate RNG substreams, so results are reproducible and
independent of execution order or worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import EstimationError, NumericError, ValidationError
from .inference import (FitResult, PipelineSettings, refit_profiles,
                        sample_moment_curves, stepwise_fit)
from .likelihood import (ml_constant_death_shift, ml_constant_growth_shift,
                         ml_constant_variance_scale)
from .model import (grid_transitions, recover_death_modifier,
                    recover_growth_modifier, recover_variance_modifier)
from .profiles import TherapyProfile
from .simulate import PathPanel
from .smoothing import loess

__all__ = ["Hypothesis", "TestResult", "ProtocolResult", "d_statistic",
           "b_test", "isolated_test", "concatenated_protocol", "kde_null"]

MAX_REPLICATE_RETRIES = 3


def max_workers():
    """Worker cap for replicate evaluation, from GOMPERTZ_THREADS (default 1)."""
    raw = os.environ.get("GOMPERTZ_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValidationError(f"GOMPERTZ_THREADS must be an integer, got {raw!r}")


@dataclass(frozen=True)
class Hypothesis:
    """H0: one therapy function equals a given profile, with its context.

    `sim_profiles` is the (C, D, V) triple simulated under H0 (h already in
    the target slot).  `companion_c`/`companion_d` are the grid values the
    replicate estimator uses in the recovery relation; `reestimate_death`
    replays the within-group pointwise death estimate before a variance
    target, exactly as the original pipeline did.
    """

    target: str
    h: TherapyProfile
    group: str
    params: "ModelParams"
    design: "StudyDesign"
    n_paths: int
    sim_profiles: tuple
    fitted: TherapyProfile
    settings: PipelineSettings
    companion_c: np.ndarray | None = None
    companion_d: np.ndarray | None = None
    reestimate_death: bool = False

    def __post_init__(self):
        if self.target not in ("C", "D", "V1", "V2"):
            raise ValidationError(f"unknown hypothesis target {self.target!r}")
        self.h(self.design.grid)  # must be evaluable on the grid


@dataclass(frozen=True)
class TestResult:
    """Outcome of one bootstrap test."""

    target: str
    h_description: str
    statistic: float
    replicates: np.ndarray = field(repr=False)
    p_value: float
    m: int
    seed: int
    level: float

    @property
    def reject(self):
        return self.p_value < self.level


@dataclass(frozen=True)
class ProtocolResult:
    """All four concatenated tests plus the pre- and post-test fits."""

    tests: tuple
    fit: FitResult
    final_fit: FitResult


def d_statistic(fitted, h, grid, exclude=None):
    """Grid sum of absolute deviations between a fitted profile and h.

    `exclude` marks grid points that contribute zero (logged by callers).
    """
    grid = np.asarray(grid, dtype=float)
    dev = np.abs(np.asarray(fitted(grid), dtype=float) - np.asarray(h(grid), dtype=float))
    if exclude is not None:
        dev = np.where(np.asarray(exclude, bool), 0.0, dev)
    return float(np.sum(dev))


def _estimate_target(hyp, values):
    """Re-estimate the hypothesis target from a simulated panel's values."""
    panel = PathPanel(design=hyp.design, values=values, label=hyp.group)
    curves = sample_moment_curves(panel)
    s = hyp.settings
    kw = dict(form=s.relation_form, eps_denom=s.eps_denom)
    target = hyp.target
    if target == "C":
        raw = recover_growth_modifier(curves, hyp.params, hyp.companion_d, **kw)
        missing = ~np.isfinite(raw)
    elif target == "D":
        raw, missing = recover_death_modifier(curves, hyp.params, hyp.companion_c, **kw)
    else:
        if hyp.reestimate_death:
            d_vals, _ = recover_death_modifier(curves, hyp.params, hyp.companion_c, **kw)
        else:
            d_vals = hyp.companion_d
        raw, _, missing = recover_variance_modifier(curves, hyp.params, d_vals,
                                                    eps_v=s.eps_v, **kw)
    smoothed = loess(hyp.design.grid, raw, span=s.span_for(target),
                     degree=s.loess_degree, iterations=s.loess_iterations,
                     missing=missing)
    if target.startswith("V"):
        smoothed = np.maximum(smoothed, s.eps_v)
    return smoothed


def b_test(hypothesis, panel, m, seed, level=0.05, workers=None,
           _replicate_override=None):
    """Bootstrap test of the hypothesis against the observed fit.

    Simulates `m` panels of `panel.n_paths` paths under the H0 model,
    re-estimates the target from each with the recorded pipeline settings
    and returns the exact >=-proportion p-value.  Failed replicate
    estimations are retried on fresh substreams up to 3 times.
    """
    if m < 100:
        raise ValidationError("bootstrap needs m >= 100 replicates")
    hyp = hypothesis
    grid = hyp.design.grid
    h_grid = hyp.h(grid)
    observed = d_statistic(hyp.fitted, hyp.h, grid)

    c_prof, d_prof, v_prof = hyp.sim_profiles
    kbar, theta, omega = grid_transitions(hyp.params, c_prof, d_prof, v_prof,
                                          hyp.design, subdiv=hyp.settings.quad_subdiv)
    sd = hyp.params.sigma * np.sqrt(omega)
    if np.any(omega <= 0):
        raise NumericError("H0 model produced a non-positive transition variance")
    n_paths = panel.n_paths
    lnx0 = np.log(hyp.design.x0)
    n_times = grid.size

    def one_replicate(ss):
        rng = np.random.Generator(np.random.PCG64(ss))
        noise = rng.standard_normal((n_paths, n_times - 1))
        lnx = np.empty((n_paths, n_times))
        lnx[:, 0] = lnx0
        for j in range(n_times - 1):
            lnx[:, j + 1] = kbar[j] * lnx[:, j] + theta[j] + sd[j] * noise[:, j]
        values = np.exp(lnx)
        values[:, 0] = hyp.design.x0
        est = _estimate_target(hyp, values)
        return float(np.sum(np.abs(est - h_grid)))

    replicate_seeds = np.random.SeedSequence(seed).spawn(m)

    def run_one(l):
        if _replicate_override is not None:
            return _replicate_override(l)
        attempts = replicate_seeds[l].spawn(MAX_REPLICATE_RETRIES)
        last_err = None
        for ss in attempts:
            try:
                return one_replicate(ss)
            except (NumericError, ValidationError, np.linalg.LinAlgError) as err:
                last_err = err
        raise EstimationError(
            f"bootstrap replicate {l} failed {MAX_REPLICATE_RETRIES} times: {last_err}"
        )

    workers = workers if workers is not None else max_workers()
    stats = np.empty(m)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for l, val in enumerate(pool.map(run_one, range(m))):
                stats[l] = val
    else:
        for l in range(m):
            stats[l] = run_one(l)

    p_value = float(np.count_nonzero(stats >= observed)) / m
    if hyp.h.is_constant:
        h_desc = f"{hyp.target}(t) = {hyp.h.const_value:.7g}"
    else:
        h_desc = f"{hyp.target}(t) = <{hyp.h.kind}>"
    return TestResult(target=hyp.target, h_description=h_desc, statistic=observed,
                      replicates=stats, p_value=p_value, m=m, seed=seed, level=level)


def _protocol_plan(fit, params, g1, g2, settings):
    """The four tests in protocol order with their branch-dependent contexts.

    Each entry lazily builds a Hypothesis from the accept/reject state of
    the earlier tests.
    """
    grid = fit.grid
    zero_c = TherapyProfile.zero("C")
    zero_d = TherapyProfile.zero("D")
    zeros = np.zeros(grid.size)
    apf = settings.ordering == "anti_proliferative_first"

    def mk(target, h, sim, group, **kw):
        return Hypothesis(target=target, h=h, group=group, params=params,
                          design=g1.design if group == "g1" else g2.design,
                          n_paths=(g1 if group == "g1" else g2).n_paths,
                          sim_profiles=sim, fitted=fit.profiles[target],
                          settings=settings, **kw)

    if apf:
        def plan_v1(ctx):
            v1 = ml_constant_variance_scale(g1, params, fit.profiles["C"], zero_d,
                                            subdiv=settings.quad_subdiv)
            h = TherapyProfile.constant(v1, "V")
            return mk("V1", h, (fit.profiles["C"], zero_d, h), "g1",
                      companion_d=zeros)

        def plan_c(ctx):
            v1_ctx = ctx.accepted_profile("V1")
            c = ml_constant_growth_shift(g1, params, zero_d, v1_ctx,
                                         subdiv=settings.quad_subdiv)
            h = TherapyProfile.constant(c, "C")
            return mk("C", h, (h, zero_d, v1_ctx), "g1", companion_d=zeros)

        def plan_v2(ctx):
            c_ctx = ctx.accepted_profile("C")
            v2 = ml_constant_variance_scale(g2, params, c_ctx, fit.profiles["D"],
                                            subdiv=settings.quad_subdiv)
            h = TherapyProfile.constant(v2, "V")
            return mk("V2", h, (c_ctx, fit.profiles["D"], h), "g2",
                      companion_c=c_ctx(grid), reestimate_death=True)

        def plan_d(ctx):
            c_ctx = ctx.accepted_profile("C")
            v2_ctx = ctx.accepted_profile("V2")
            d = ml_constant_death_shift(g2, params, c_ctx, v2_ctx,
                                        subdiv=settings.quad_subdiv)
            h = TherapyProfile.constant(d, "D")
            return mk("D", h, (c_ctx, h, v2_ctx), "g2", companion_c=c_ctx(grid))

        return [plan_v1, plan_c, plan_v2, plan_d]

    def plan_v1(ctx):
        v1 = ml_constant_variance_scale(g1, params, zero_c, fit.profiles["D"],
                                        subdiv=settings.quad_subdiv)
        h = TherapyProfile.constant(v1, "V")
        return mk("V1", h, (zero_c, fit.profiles["D"], h), "g1",
                  companion_c=zeros, reestimate_death=True)

    def plan_d(ctx):
        v1_ctx = ctx.accepted_profile("V1")
        d = ml_constant_death_shift(g1, params, zero_c, v1_ctx,
                                    subdiv=settings.quad_subdiv)
        h = TherapyProfile.constant(d, "D")
        return mk("D", h, (zero_c, h, v1_ctx), "g1", companion_c=zeros)

    def plan_v2(ctx):
        d_ctx = ctx.accepted_profile("D")
        v2 = ml_constant_variance_scale(g2, params, fit.profiles["C"], d_ctx,
                                        subdiv=settings.quad_subdiv)
        h = TherapyProfile.constant(v2, "V")
        return mk("V2", h, (fit.profiles["C"], d_ctx, h), "g2",
                  companion_d=d_ctx(grid))

    def plan_c(ctx):
        d_ctx = ctx.accepted_profile("D")
        v2_ctx = ctx.accepted_profile("V2")
        c = ml_constant_growth_shift(g2, params, d_ctx, v2_ctx,
                                     subdiv=settings.quad_subdiv)
        h = TherapyProfile.constant(c, "C")
        return mk("C", h, (h, d_ctx, v2_ctx), "g2", companion_d=d_ctx(grid))

    return [plan_v1, plan_d, plan_v2, plan_c]


class _ProtocolContext:
    """Accept/reject state threaded through the concatenated tests."""

    def __init__(self, fit):
        self.fit = fit
        self.outcomes = {}

    def record(self, target, hypothesis, result):
        self.outcomes[target] = (hypothesis, result)

    def accepted_profile(self, target):
        """The H0 profile if that test accepted, else the fitted one."""
        if target in self.outcomes:
            hyp, res = self.outcomes[target]
            if not res.reject:
                return hyp.h
        return self.fit.profiles[target]


PROTOCOL_ORDER = {
    "anti_proliferative_first": ("V1", "C", "V2", "D"),
    "death_induced_first": ("V1", "D", "V2", "C"),
}


def isolated_test(fit, g1, g2, target, m, seed, level=0.05, workers=None):
    """One bootstrap constancy test outside the protocol.

    The companion quantities stay at their fitted forms (no earlier
    accept/reject branches), which coincides with the protocol for the
    first test of each group.
    """
    settings = fit.settings
    plans = _protocol_plan(fit, fit.params, g1, g2, settings)
    order = PROTOCOL_ORDER[settings.ordering]
    if target not in order:
        raise ValidationError(f"unknown test target {target!r}")
    hyp = plans[order.index(target)](_ProtocolContext(fit))
    panel = g1 if hyp.group == "g1" else g2
    return b_test(hyp, panel, m=m, seed=seed, level=level, workers=workers)


def concatenated_protocol(control, g1, g2, settings=None, level=0.05, m=1500,
                          seed=0, params=None, workers=None):
    """Run the ordered constancy tests with branch-dependent constants.

    Variance scale first, then the rate shift, per treated group; each
    later constant is determined under the earlier tests' accepted forms.
    Returns every TestResult plus the post-test model with accepted
    constants substituted.
    """
    settings = settings or PipelineSettings()
    fit = stepwise_fit(control, g1, g2, settings=settings, params=params)
    plans = _protocol_plan(fit, fit.params, g1, g2, settings)
    ctx = _ProtocolContext(fit)
    seeds = np.random.SeedSequence(seed).spawn(len(plans))
    tests = []
    for plan, test_ss in zip(plans, seeds):
        hyp = plan(ctx)
        panel = g1 if hyp.group == "g1" else g2
        test_seed = int(test_ss.generate_state(1)[0])
        result = b_test(hyp, panel, m=m, seed=test_seed, level=level,
                        workers=workers)
        ctx.record(hyp.target, hyp, result)
        tests.append(result)
    replacements = {t: ctx.outcomes[t][0].h for t in ctx.outcomes
                    if not ctx.outcomes[t][1].reject}
    return ProtocolResult(tests=tuple(tests), fit=fit,
                          final_fit=refit_profiles(fit, replacements))


# -- kernel density summary of the null distribution ----------------------


def _pairwise_sum(x, scale, deriv):
    """Sum over all pairs of the scaled normal-density derivative."""
    n = x.size
    total = 0.0
    chunk = max(1, 2_000_000 // max(n, 1))
    for start in range(0, n, chunk):
        d = (x[start:start + chunk, None] - x[None, :]) / scale
        if deriv == 4:
            val = (d**4 - 6.0 * d**2 + 3.0) * np.exp(-0.5 * d * d)
        else:
            val = (d**6 - 15.0 * d**4 + 45.0 * d**2 - 15.0) * np.exp(-0.5 * d * d)
        total += float(np.sum(val))
    return total / np.sqrt(2.0 * np.pi)


def silverman_bandwidth(x):
    """Rule-of-thumb bandwidth 0.9 min(sd, IQR/1.34) n^(-1/5)."""
    x = np.asarray(x, dtype=float)
    sd = x.std(ddof=1)
    iqr = np.subtract(*np.percentile(x, [75, 25]))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 0.9 * spread * x.size ** (-0.2)


def sheather_jones_bandwidth(x):
    """Solve-the-equation plug-in bandwidth for a Gaussian kernel."""
    x = np.asarray(x, dtype=float)
    n = x.size
    sd = x.std(ddof=1)
    iqr = np.subtract(*np.percentile(x, [75, 25]))
    lam = min(sd, iqr / 1.349) if iqr > 0 else sd
    if lam <= 0:
        raise NumericError("replicates have zero spread")
    a = 0.920 * lam * n ** (-1.0 / 7.0)
    b = 0.912 * lam * n ** (-1.0 / 9.0)
    s_a = _pairwise_sum(x, a, 4) / (n * (n - 1) * a**5)
    t_b = -_pairwise_sum(x, b, 6) / (n * (n - 1) * b**7)
    if s_a <= 0 or t_b <= 0:
        raise NumericError("plug-in functionals are non-positive; bandwidth undefined")

    def objective(h):
        g = 1.357 * (s_a / t_b) ** (1.0 / 7.0) * h ** (5.0 / 7.0)
        s_g = _pairwise_sum(x, g, 4) / (n * (n - 1) * g**5)
        if s_g <= 0:
            return np.inf
        return (1.0 / (2.0 * np.sqrt(np.pi) * n * s_g)) ** 0.2 - h

    h0 = silverman_bandwidth(x)
    lo, hi = 0.02 * h0, 20.0 * h0
    flo, fhi = objective(lo), objective(hi)
    if not np.isfinite(flo) or not np.isfinite(fhi) or flo * fhi > 0:
        return h0  # fall back to the rule of thumb on pathological samples
    return float(brentq(objective, lo, hi, xtol=1e-12 * h0 + 1e-300))


def kde_null(replicates, bandwidth="silverman", grid_size=256, level=0.05):
    """Gaussian KDE of the null statistics plus the empirical critical point.

    Returns (grid, density, critical_value); the critical value is the
    empirical (1 - level) quantile of the replicates.
    """
    x = np.asarray(replicates, dtype=float)
    if x.size < 30:
        raise ValidationError("kernel density summary needs at least 30 replicates")
    if np.ptp(x) == 0 or x.std(ddof=1) == 0:
        raise NumericError("replicates have zero variance; density undefined")
    if isinstance(bandwidth, str):
        if bandwidth == "silverman":
            h = silverman_bandwidth(x)
        elif bandwidth == "sheather_jones":
            h = sheather_jones_bandwidth(x)
        else:
            raise ValidationError(f"unknown bandwidth rule {bandwidth!r}")
    else:
        h = float(bandwidth)
        if h <= 0:
            raise ValidationError("bandwidth must be positive")
    grid = np.linspace(x.min() - 3 * h, x.max() + 3 * h, grid_size)
    z = (grid[:, None] - x[None, :]) / h
    density = np.exp(-0.5 * z * z).sum(axis=1) / (x.size * h * np.sqrt(2 * np.pi))
    critical = float(np.quantile(x, 1.0 - level))
    return grid, density, critical
