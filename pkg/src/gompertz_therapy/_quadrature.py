"""Composite-Simpson machinery for the transition-kernel integrals.

Every integral the model needs has the shape

    psi(l, m, p, q; beta) = int_a^b (b-s)^l C(s)^m V(s)^p kbar(b|s)^q ds,

with kbar(b|s) = exp(-int_s^b (beta - D(r)) dr).  A transition stores the
beta-free node data (Simpson nodes, weights, profile values and the tail
integrals of D), so re-evaluating at a new beta is a cheap weighted sum.
When C, D and V are all constant the closed forms are used instead; both
paths satisfy d(psi)/d(beta) = -q * psi(l+1, ...) identically.
"""

from __future__ import annotations

import numpy as np

from .errors import QuadratureError

#: Simpson subintervals per unit-length transition (kept even).
DEFAULT_SUBDIV = 8


def _even(n):
    n = max(2, int(n))
    return n if n % 2 == 0 else n + 1


def simpson_weights(a, b, n):
    """Weights of composite Simpson with n (even) subintervals on [a, b]."""
    n = _even(n)
    h = (b - a) / n
    w = np.full(n + 1, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return w * (h / 3.0)


def _j0(x, d):
    """int_0^d exp(-a w) dw expressed via x = a*d (vectorized, stable at x ~ 0)."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    out = np.empty(np.broadcast(x, d).shape)
    xb, db = np.broadcast_arrays(x, d)
    small = np.abs(xb) < 1e-6
    xs = xb[small]
    out[small] = db[small] * (1.0 - xs / 2.0 + xs * xs / 6.0 - xs**3 / 24.0)
    xl = xb[~small]
    out[~small] = -np.expm1(-xl) * db[~small] / xl
    return out


def _j1(x, d):
    """int_0^d w exp(-a w) dw via x = a*d (vectorized, stable at x ~ 0)."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    out = np.empty(np.broadcast(x, d).shape)
    xb, db = np.broadcast_arrays(x, d)
    small = np.abs(xb) < 1e-4
    xs = xb[small]
    out[small] = db[small] ** 2 * (0.5 - xs / 3.0 + xs * xs / 8.0 - xs**3 / 30.0)
    xl = xb[~small]
    out[~small] = db[~small] ** 2 * (1.0 - (1.0 + xl) * np.exp(-xl)) / (xl * xl)
    return out


class TransitionSet:
    """Node data for a batch of transitions sharing the same profiles.

    Built once per (C, D, V, time pairs); all psi evaluations are then pure
    functions of beta.  A one-beta memo keeps the exp factors shared across
    the psi tuples queried by the likelihood machinery.
    """

    def __init__(self, C, D, V, t_from, t_to, subdiv=DEFAULT_SUBDIV):
        t_from = np.atleast_1d(np.asarray(t_from, dtype=float))
        t_to = np.atleast_1d(np.asarray(t_to, dtype=float))
        if t_from.shape != t_to.shape:
            raise QuadratureError("mismatched transition endpoint arrays")
        if np.any(t_to < t_from):
            bad = int(np.argmax(t_to < t_from))
            raise QuadratureError(
                "transition must run forward in time",
                interval=(t_from[bad], t_to[bad]),
            )
        self.t_from = t_from
        self.t_to = t_to
        self.duration = t_to - t_from
        self.constant = C.is_constant and D.is_constant and V.is_constant
        self._memo_beta = None
        self._memo = {}
        if self.constant:
            self._c = C.const_value
            self._d = D.const_value
            self._v = V.const_value
            return

        n = _even(subdiv)
        frac = np.linspace(0.0, 1.0, n + 1)
        # coarse Simpson nodes per transition, shape (T, n+1)
        s = t_from[:, None] + self.duration[:, None] * frac[None, :]
        self._dt = t_to[:, None] - s
        self._w = (self.duration[:, None] / n) / 3.0 * np.where(
            (np.arange(n + 1) % 2) == 1, 4.0, 2.0
        )
        self._w[:, 0] = self.duration / n / 3.0
        self._w[:, -1] = self.duration / n / 3.0
        self._c = C(s)
        self._v = V(s)
        # tail integrals int_{s_k}^{t_to} D, via Simpson on half-spaced nodes
        if D.is_constant:
            self._d_tail = D.const_value * self._dt
        else:
            fine_frac = np.linspace(0.0, 1.0, 2 * n + 1)
            sf = t_from[:, None] + self.duration[:, None] * fine_frac[None, :]
            df = D(sf)
            h = self.duration / n  # coarse spacing
            seg = (h[:, None] / 6.0) * (df[:, 0:-2:2] + 4.0 * df[:, 1::2] + df[:, 2::2])
            tail = np.zeros_like(self._dt)
            tail[:, :-1] = np.cumsum(seg[:, ::-1], axis=1)[:, ::-1]
            self._d_tail = tail

    def __len__(self):
        return self.t_from.size

    def _exp_factor(self, q, beta):
        if self._memo_beta != beta:
            self._memo_beta = beta
            self._memo = {}
        key = q
        if key not in self._memo:
            self._memo[key] = np.exp(q * (self._d_tail - beta * self._dt))
        return self._memo[key]

    def psi(self, l, m, p, q, beta):
        """psi(l, m, p, q; beta) for every transition, shape (T,)."""
        if self.constant:
            if m >= 1 and self._c == 0.0:
                return np.zeros_like(self.duration)
            a = q * (beta - self._d)
            j = _j0(a * self.duration, self.duration) if l == 0 else _j1(a * self.duration, self.duration)
            return (self._c**m) * (self._v**p) * j
        integrand = self._exp_factor(q, beta)
        if l:
            integrand = integrand * self._dt**l
        if m:
            integrand = integrand * self._c**m
        if p:
            integrand = integrand * self._v**p
        return np.einsum("tk,tk->t", self._w, integrand)

    def kbar(self, beta):
        """exp(-int (beta - D)) over each transition."""
        if self.constant:
            return np.exp(-(beta - self._d) * self.duration)
        return np.exp(self._d_tail[:, 0] - beta * self.duration)

    def theta(self, alpha, sigma2, beta):
        return (
            alpha * self.psi(0, 0, 0, 1, beta)
            - self.psi(0, 1, 0, 1, beta)
            - 0.5 * sigma2 * self.psi(0, 0, 1, 1, beta)
        )

    def omega(self, beta):
        return self.psi(0, 0, 1, 2, beta)

    def phi(self, alpha, sigma2, beta):
        """d(theta)/d(beta), assembled from the shifted psi tuples."""
        return (
            -alpha * self.psi(1, 0, 0, 1, beta)
            + self.psi(1, 1, 0, 1, beta)
            + 0.5 * sigma2 * self.psi(1, 0, 1, 1, beta)
        )


def span_subdiv(duration, per_unit=DEFAULT_SUBDIV):
    """Subdivision count for a free-standing interval, scaled with its length."""
    return _even(min(4096, per_unit * max(1, int(np.ceil(duration)))))
