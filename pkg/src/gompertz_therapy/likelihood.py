"""Maximum-likelihood machinery for discretely observed panels.

The log-likelihood of a panel factorizes over lognormal transitions whose
parameters are weighted integrals (psi) of the therapy profiles.  All the
aggregate sums needed by the likelihood equations reduce to per-unique-
transition coefficients times cached sufficient statistics of the data, so
evaluating the equations at a new parameter point costs O(#unique
transitions) regardless of panel size.

The three likelihood equations solved here are the stationarity conditions
of the log-likelihood:

    eq_growth:   2 a X1 - 2 X2 - s2 X3 - 2 X4 = 0            (linear in a)
    eq_death:    X5 - X6 - X7 - X8 - X9 + 2 X10 + X11 + s2 X12 = 0
    eq_variance: (s2^2/4) X13 + n s2
                 - (Z + a^2 X1 - 2 a X2 - 2 a X4 + X14 + 2 X15) = 0

The eq_death coefficient on X12 and the (duration, left log-state) pairing
inside X5/X9 are fixed by differentiating the log-likelihood directly; the
finite-difference score check in the test suite pins both down.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import brentq

from ._quadrature import DEFAULT_SUBDIV, TransitionSet, span_subdiv
from .errors import EstimationError, NumericError, ValidationError
from .model import ModelParams
from .profiles import TherapyProfile
from .simulate import PathPanel

__all__ = [
    "psi_integral",
    "LikelihoodWorkspace",
    "log_likelihood",
    "ml_fit_control",
    "ml_constant_growth_shift",
    "ml_constant_death_shift",
    "ml_constant_variance_scale",
]

BETA_BRACKET = (1e-4, 5.0)
FIXED_POINT_TOL = 1e-12
MAX_FIXED_POINT_ITER = 200
EQUATION_TOL = 1e-8


def psi_integral(t_prev, t_cur, l, m, p, q, beta, C, D, V, subdiv=None):
    """int_{t_prev}^{t_cur} (t_cur-s)^l C^m V^p kbar(t_cur|s)^q ds."""
    if t_cur < t_prev:
        raise ValidationError("psi integral requires t_prev <= t_cur")
    subdiv = subdiv or span_subdiv(t_cur - t_prev)
    trans = TransitionSet(C, D, V, [t_prev], [t_cur], subdiv=subdiv)
    return float(trans.psi(l, m, p, q, beta)[0])


def _as_paths(panel):
    """Normalize a PathPanel or an iterable of (times, values) pairs."""
    if isinstance(panel, PathPanel):
        return [(panel.grid, row) for row in panel.values]
    paths = []
    for times, values in panel:
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.size != values.size or times.size < 2:
            raise ValidationError("each path needs matching times/values with >= 2 points")
        if np.any(values <= 0):
            raise ValidationError("path values must be strictly positive")
        paths.append((times, values))
    return paths


class LikelihoodWorkspace:
    """Per-panel transition data and the likelihood-equation aggregates."""

    def __init__(self, panel, C, D, V, subdiv=DEFAULT_SUBDIV):
        paths = _as_paths(panel)
        t_prev, t_cur, lx_prev, lx_cur = [], [], [], []
        for times, values in paths:
            lx = np.log(values)
            t_prev.append(times[:-1])
            t_cur.append(times[1:])
            lx_prev.append(lx[:-1])
            lx_cur.append(lx[1:])
        t_prev = np.concatenate(t_prev)
        t_cur = np.concatenate(t_cur)
        lx_prev = np.concatenate(lx_prev)
        lx_cur = np.concatenate(lx_cur)

        pairs = np.stack([t_prev, t_cur], axis=1)
        uniq, uidx = np.unique(pairs, axis=0, return_inverse=True)
        self.transitions = TransitionSet(C, D, V, uniq[:, 0], uniq[:, 1], subdiv=subdiv)
        self.n = int(t_prev.size)
        self._n_u = uniq.shape[0]
        self._uidx = uidx
        self._lx_prev = lx_prev
        self._lx_cur = lx_cur
        self._count = np.bincount(uidx, minlength=self._n_u).astype(float)
        self._s_prev = np.bincount(uidx, weights=lx_prev, minlength=self._n_u)
        self.sum_ln_x = float(np.sum(lx_cur))

    # -- per-beta transition quantities ---------------------------------

    def _delta(self, kbar):
        """Per-transition increments; formed directly so tiny values survive."""
        return self._lx_cur - kbar[self._uidx] * self._lx_prev

    def _parts(self, alpha, beta, sigma2):
        tr = self.transitions
        omega = tr.omega(beta)
        if np.any(omega <= 0):
            raise NumericError("non-positive transition log-variance encountered")
        kbar = tr.kbar(beta)
        theta = tr.theta(alpha, sigma2, beta)
        phi = tr.phi(alpha, sigma2, beta)
        delta = self._delta(kbar)
        s_d = np.bincount(self._uidx, weights=delta, minlength=self._n_u)
        s_d2 = np.bincount(self._uidx, weights=delta * delta, minlength=self._n_u)
        s_dprev = np.bincount(self._uidx, weights=delta * self._lx_prev,
                              minlength=self._n_u)
        return kbar, theta, omega, phi, s_d, s_d2, s_dprev

    def aggregates(self, alpha, beta, sigma2):
        """Z and X1..X15 at the given parameter point."""
        tr = self.transitions
        kbar, theta, omega, phi, s_d, s_d2, s_dprev = self._parts(alpha, beta, sigma2)
        p0001 = tr.psi(0, 0, 0, 1, beta)
        p0101 = tr.psi(0, 1, 0, 1, beta)
        p0011 = tr.psi(0, 0, 1, 1, beta)
        p1012 = tr.psi(1, 0, 1, 2, beta)
        dur = tr.duration
        cnt = self._count
        inv = 1.0 / omega
        x = {}
        x[1] = np.sum(cnt * p0001**2 * inv)
        x[2] = np.sum(cnt * p0101 * p0001 * inv)
        x[3] = np.sum(cnt * p0011 * p0001 * inv)
        x[4] = np.sum(s_d * p0001 * inv)
        x[5] = np.sum(kbar * dur * theta * inv * self._s_prev)
        x[6] = np.sum(cnt * theta * phi * inv)
        x[7] = np.sum(cnt * theta**2 * p1012 * inv**2)
        x[8] = np.sum(s_d2 * p1012 * inv**2)
        x[9] = np.sum(s_dprev * kbar * dur * inv)
        x[10] = np.sum(s_d * p1012 * theta * inv**2)
        x[11] = np.sum(s_d * phi * inv)
        x[12] = np.sum(cnt * p1012 * inv)
        x[13] = np.sum(cnt * p0011**2 * inv)
        x[14] = np.sum(cnt * p0101**2 * inv)
        x[15] = np.sum(s_d * p0101 * inv)
        z = np.sum(s_d2 * inv)
        return z, x

    def log_likelihood(self, alpha, beta, sigma2):
        """The panel log-likelihood at (alpha, beta, sigma2)."""
        if sigma2 <= 0:
            raise NumericError("sigma2 must be positive")
        tr = self.transitions
        omega = tr.omega(beta)
        if np.any(omega <= 0):
            raise NumericError("non-positive transition log-variance encountered")
        kbar = tr.kbar(beta)
        theta = tr.theta(alpha, sigma2, beta)
        resid = self._delta(kbar) - theta[self._uidx]
        quad = np.sum(resid * resid / omega[self._uidx])
        return (
            -0.5 * self.n * np.log(2.0 * np.pi)
            - 0.5 * self.n * np.log(sigma2)
            - quad / (2.0 * sigma2)
            - 0.5 * np.sum(self._count * np.log(omega))
            - self.sum_ln_x
        )

    # -- likelihood equations -------------------------------------------

    def eq_growth(self, alpha, beta, sigma2):
        z, x = self.aggregates(alpha, beta, sigma2)
        return 2.0 * alpha * x[1] - 2.0 * x[2] - sigma2 * x[3] - 2.0 * x[4]

    def eq_death(self, alpha, beta, sigma2):
        z, x = self.aggregates(alpha, beta, sigma2)
        return (x[5] - x[6] - x[7] - x[8] - x[9] + 2.0 * x[10] + x[11]
                + sigma2 * x[12])

    def _sigma_rhs(self, alpha, beta):
        """Sum of squared sigma2-free residuals over Omega.

        Algebraically Z + a^2 X1 - 2a X2 - 2a X4 + X14 + 2 X15 but formed
        per transition, which keeps it non-negative in floating point even
        for nearly noise-free panels.
        """
        tr = self.transitions
        omega = tr.omega(beta)
        if np.any(omega <= 0):
            raise NumericError("non-positive transition log-variance encountered")
        c = alpha * tr.psi(0, 0, 0, 1, beta) - tr.psi(0, 1, 0, 1, beta)
        resid = self._delta(tr.kbar(beta)) - c[self._uidx]
        return float(np.sum(resid * resid / omega[self._uidx]))

    def eq_variance(self, alpha, beta, sigma2):
        z, x = self.aggregates(alpha, beta, sigma2)
        rhs = self._sigma_rhs(alpha, beta)
        return 0.25 * sigma2**2 * x[13] + self.n * sigma2 - rhs

    def equation_scales(self, alpha, beta, sigma2):
        """Magnitude scales of the three equations, for relative residuals."""
        z, x = self.aggregates(alpha, beta, sigma2)
        s_growth = abs(2 * alpha * x[1]) + abs(2 * x[2]) + abs(sigma2 * x[3]) + abs(2 * x[4])
        s_death = sum(abs(v) for v in (x[5], x[6], x[7], x[8], x[9], 2 * x[10],
                                       x[11], sigma2 * x[12]))
        s_var = (abs(0.25 * sigma2**2 * x[13]) + abs(self.n * sigma2)
                 + self._sigma_rhs(alpha, beta))
        return s_growth, s_death, s_var

    # -- profile solvers -------------------------------------------------

    def solve_growth(self, beta, sigma2):
        """The growth rate solving eq_growth given (beta, sigma2)."""
        z, x = self.aggregates(1.0, beta, sigma2)  # X's do not involve alpha
        if x[1] <= 0:
            raise EstimationError("degenerate design: sum of squared psi weights vanishes")
        return (2.0 * x[2] + sigma2 * x[3] + 2.0 * x[4]) / (2.0 * x[1])

    def solve_variance(self, alpha, beta):
        """The positive sigma2 root of eq_variance given (alpha, beta)."""
        z, x = self.aggregates(alpha, beta, 1.0)  # X's do not involve sigma2
        rhs = self._sigma_rhs(alpha, beta)
        if x[13] <= 0:
            raise EstimationError("degenerate design: variance equation has no curvature")
        # rationalized root of (x13/4) s^2 + n s - rhs: stable when rhs ~ 0
        disc = self.n**2 + x[13] * rhs
        root = 2.0 * rhs / (self.n + np.sqrt(disc))
        if root <= 0:
            raise EstimationError("variance equation has no positive root")
        return root

    def profile_growth_variance(self, beta, sigma2_start=1e-4):
        """Alternate the growth and variance solves to a joint fixed point."""
        sigma2 = sigma2_start
        alpha = self.solve_growth(beta, sigma2)
        for _ in range(MAX_FIXED_POINT_ITER):
            alpha_new = self.solve_growth(beta, sigma2)
            sigma2_new = self.solve_variance(alpha_new, beta)
            done = (abs(alpha_new - alpha) <= FIXED_POINT_TOL * (1 + abs(alpha))
                    and abs(sigma2_new - sigma2) <= FIXED_POINT_TOL * (1 + abs(sigma2)))
            alpha, sigma2 = alpha_new, sigma2_new
            if done:
                break
        else:
            raise EstimationError("growth/variance fixed point did not converge")
        return alpha, sigma2


def log_likelihood(panel, params, C, D, V, subdiv=DEFAULT_SUBDIV):
    """Panel log-likelihood under the given parameters and profiles."""
    ws = LikelihoodWorkspace(panel, C, D, V, subdiv=subdiv)
    return ws.log_likelihood(params.alpha, params.beta, params.sigma2)


def _bracket_root(f, lo, hi, n_scan=33, max_expand=3):
    """Locate a sign change by geometric scan, expanding the bracket if needed."""
    trace = []
    for _ in range(max_expand + 1):
        xs = np.geomspace(lo, hi, n_scan)
        vals = np.array([f(x) for x in xs])
        trace.append((lo, hi, vals))
        sign = np.sign(vals)
        flips = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
        if vals[0] == 0.0:
            return xs[0], xs[0], trace
        if flips.size:
            i = flips[0]
            return xs[i], xs[i + 1], trace
        zero = np.nonzero(sign == 0)[0]
        if zero.size:
            return xs[zero[0]], xs[zero[0]], trace
        lo, hi = lo / 8.0, hi * 8.0
    raise EstimationError(
        f"no sign change found in the rate bracket after expansion; last scan "
        f"values in [{vals.min():.3g}, {vals.max():.3g}]"
    )


def ml_fit_control(panel, subdiv=DEFAULT_SUBDIV, bracket=BETA_BRACKET,
                   full_output=False):
    """Maximum-likelihood (alpha, beta, sigma) from an untreated panel.

    The growth equation is linear in alpha and the variance equation is a
    quadratic in sigma2 with a unique positive root; both are profiled out
    and the remaining one-dimensional death-rate equation is solved by
    Brent's method.  The returned triple is verified to zero all three
    equations to a relative tolerance of 1e-8.
    """
    zero_c = TherapyProfile.zero("C")
    zero_d = TherapyProfile.zero("D")
    one_v = TherapyProfile.one("V")
    ws = LikelihoodWorkspace(panel, zero_c, zero_d, one_v, subdiv=subdiv)

    def profiled(beta):
        alpha, sigma2 = ws.profile_growth_variance(beta)
        return ws.eq_death(alpha, beta, sigma2)

    lo, hi, trace = _bracket_root(profiled, *bracket)
    beta = lo if lo == hi else brentq(profiled, lo, hi, xtol=FIXED_POINT_TOL,
                                      rtol=8.881784197001252e-16, maxiter=200)
    alpha, sigma2 = ws.profile_growth_variance(beta)
    if sigma2 <= 0:
        raise EstimationError("maximum-likelihood sigma2 is non-positive")
    res = (ws.eq_growth(alpha, beta, sigma2), ws.eq_death(alpha, beta, sigma2),
           ws.eq_variance(alpha, beta, sigma2))
    scales = ws.equation_scales(alpha, beta, sigma2)
    rel = tuple(abs(r) / (1.0 + s) for r, s in zip(res, scales))
    if max(rel) > EQUATION_TOL:
        raise EstimationError(
            f"likelihood equations not zeroed at the returned root: residuals {rel}"
        )
    params = ModelParams(alpha=alpha, beta=beta, sigma=float(np.sqrt(sigma2)))
    if full_output:
        return params, {"residuals": res, "relative_residuals": rel,
                        "bracket_trace": [(t[0], t[1]) for t in trace]}
    return params


def ml_constant_growth_shift(panel, params, D, V, subdiv=DEFAULT_SUBDIV):
    """ML constant growth shift c under H0: C(t) = c.

    Solves the growth equation for the composite rate (alpha - c) with the
    growth modifier absorbed (C = 0 in the psi terms), death and variance
    profiles fixed, and beta/sigma at the control estimates.
    """
    ws = LikelihoodWorkspace(panel, TherapyProfile.zero("C"), D, V, subdiv=subdiv)
    composite = ws.solve_growth(params.beta, params.sigma2)
    return params.alpha - composite


def ml_constant_death_shift(panel, params, C, V, subdiv=DEFAULT_SUBDIV,
                            bracket=BETA_BRACKET):
    """ML constant death shift d under H0: D(t) = d.

    Solves the death equation for the composite rate (beta - d) with D = 0
    in the psi terms, growth and variance profiles fixed, and alpha/sigma
    at the control estimates.
    """
    ws = LikelihoodWorkspace(panel, C, TherapyProfile.zero("D"), V, subdiv=subdiv)

    def g(b):
        return ws.eq_death(params.alpha, b, params.sigma2)

    lo, hi, _ = _bracket_root(g, *bracket)
    composite = lo if lo == hi else brentq(g, lo, hi, xtol=FIXED_POINT_TOL, maxiter=200)
    return params.beta - composite


def ml_constant_variance_scale(panel, params, C, D, subdiv=DEFAULT_SUBDIV):
    """ML constant variance scale v under H0: V(t) = v.

    Solves the variance equation for the composite scale sigma2*v with
    V = 1 in the psi terms and all other quantities fixed, then divides by
    the control sigma2.
    """
    ws = LikelihoodWorkspace(panel, C, D, TherapyProfile.one("V"), subdiv=subdiv)
    composite = ws.solve_variance(params.alpha, params.beta)
    return composite / params.sigma2
