"""Time-dependent therapy-effect functions.

A therapy profile is a scalar function of time attached to one of the three
slots of the model: a growth-rate modifier (role ``C``), a death-rate
modifier (role ``D``) or a diffusion-variance modulator (role ``V``).
Profiles come in five kinds: the constants ``zero`` and ``one``, an
arbitrary ``constant``, a natural-cubic-spline interpolant through grid
knots, and a small family of closed-form curves used in the simulation
studies (linear ramp, rational bump, squared lognormal-density offset).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ValidationError

ROLES = ("C", "D", "V")

_FORMULAS = ("linear", "rational_bump", "lognormal_bump")


def lognormal_pdf(t, mu, s2):
    """Density of a lognormal distribution with log-mean mu and log-variance s2."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    tp = t[pos]
    out[pos] = np.exp(-((np.log(tp) - mu) ** 2) / (2.0 * s2)) / (
        tp * np.sqrt(2.0 * np.pi * s2)
    )
    return out


@dataclass(frozen=True)
class TherapyProfile:
    """One therapy function with its slot role and evaluation rule."""

    role: str
    kind: str
    value: float | None = None
    grid: np.ndarray | None = None
    values: np.ndarray | None = None
    formula: str | None = None
    params: dict | None = None
    _spline: Callable | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValidationError(f"unknown profile role {self.role!r}, expected one of {ROLES}")
        if self.kind == "grid":
            grid = np.asarray(self.grid, dtype=float)
            values = np.asarray(self.values, dtype=float)
            if grid.ndim != 1 or grid.shape != values.shape or grid.size < 2:
                raise ValidationError("grid profile needs matching 1-d knot arrays with >= 2 knots")
            if np.any(np.diff(grid) <= 0):
                raise ValidationError("grid profile knots must be strictly increasing")
            if self.role == "V" and np.any(values <= 0):
                raise ValidationError("role-V profile must be positive at every knot")
            object.__setattr__(self, "grid", grid)
            object.__setattr__(self, "values", values)
            object.__setattr__(self, "_spline", CubicSpline(grid, values, bc_type="natural"))
        elif self.kind == "constant":
            if self.value is None or not np.isfinite(self.value):
                raise ValidationError("constant profile needs a finite value")
            if self.role == "V" and self.value <= 0:
                raise ValidationError("role-V profile must be positive")
        elif self.kind == "formula":
            if self.formula not in _FORMULAS:
                raise ValidationError(f"unknown profile formula {self.formula!r}")
        elif self.kind not in ("zero", "one"):
            raise ValidationError(f"unknown profile kind {self.kind!r}")

    # -- constructors -------------------------------------------------

    @classmethod
    def zero(cls, role):
        return cls(role=role, kind="zero")

    @classmethod
    def one(cls, role):
        return cls(role=role, kind="one")

    @classmethod
    def constant(cls, value, role):
        return cls(role=role, kind="constant", value=float(value))

    @classmethod
    def from_grid(cls, grid, values, role):
        return cls(role=role, kind="grid", grid=np.asarray(grid, float), values=np.asarray(values, float))

    @classmethod
    def linear(cls, slope, role):
        return cls(role=role, kind="formula", formula="linear", params={"slope": float(slope)})

    @classmethod
    def rational_bump(cls, p, q, r, role):
        """p*t^2 / (q + t*(t - r)); the denominator must not vanish on the study window."""
        return cls(role=role, kind="formula", formula="rational_bump",
                   params={"p": float(p), "q": float(q), "r": float(r)})

    @classmethod
    def lognormal_bump(cls, base, scale, mu, s2, role):
        """(base + scale * lognormal_pdf(t; mu, s2))^2."""
        return cls(role=role, kind="formula", formula="lognormal_bump",
                   params={"base": float(base), "scale": float(scale),
                           "mu": float(mu), "s2": float(s2)})

    # -- evaluation ----------------------------------------------------

    @property
    def const_value(self):
        """The profile's constant value, or None if it varies with time."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "one":
            return 1.0
        if self.kind == "constant":
            return self.value
        return None

    @property
    def is_constant(self):
        return self.const_value is not None

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        c = self.const_value
        if c is not None:
            out = np.full_like(t, c)
        elif self.kind == "grid":
            out = np.asarray(self._spline(t), dtype=float)
            # knots evaluate to the stored values bit-for-bit
            idx = np.searchsorted(self.grid, t)
            idx = np.clip(idx, 0, self.grid.size - 1)
            hit = self.grid[idx] == t
            out[hit] = self.values[idx[hit]]
        else:
            out = self._formula_eval(t)
        return out[0] if scalar else out

    def _formula_eval(self, t):
        p = self.params
        if self.formula == "linear":
            return p["slope"] * t
        if self.formula == "rational_bump":
            den = p["q"] + t * (t - p["r"])
            if np.any(den == 0):
                raise ValidationError("rational_bump denominator vanishes on the requested times")
            return p["p"] * t * t / den
        # lognormal_bump
        return (p["base"] + p["scale"] * lognormal_pdf(t, p["mu"], p["s2"])) ** 2

    def check_positive_on(self, grid):
        """Validate the role-V positivity requirement on a time grid."""
        vals = self(np.asarray(grid, float))
        if np.any(vals <= 0):
            bad = np.asarray(grid, float)[np.atleast_1d(vals) <= 0]
            raise ValidationError(f"role-V profile is non-positive at t={bad[0]:g}")
        return True
