"""Sample-path generation for the modulated Gompertz diffusion.

Two schemes: exact lognormal-transition sampling on the observation grid
(statistically exact, the default) and Euler-Maruyama on a refined grid.
Each path draws from its own RNG substream spawned from the master seed,
so panels are bit-reproducible regardless of execution order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._quadrature import DEFAULT_SUBDIV
from .errors import SimulationError, ValidationError
from .model import grid_transitions

__all__ = ["PathPanel", "SimulationConfig", "simulate"]

SCHEMES = ("exact", "euler")


@dataclass(frozen=True)
class PathPanel:
    """d sample paths observed on a shared time grid."""

    design: "StudyDesign"
    values: np.ndarray  # shape (d, n_times)
    label: str = ""
    failed_paths: tuple = field(default=(), compare=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ValidationError("panel values must be a (subjects x times) matrix")
        if values.shape[1] != self.design.n_times:
            raise ValidationError("panel column count must equal the grid length")
        if np.any(values <= 0):
            raise ValidationError("panel values must be strictly positive")
        if np.any(values[:, 0] != self.design.x0):
            raise ValidationError("every path must start at the design's x0")
        object.__setattr__(self, "values", values)

    @property
    def n_paths(self):
        return int(self.values.shape[0])

    @property
    def grid(self):
        return self.design.grid

    def log_values(self):
        return np.log(self.values)


@dataclass(frozen=True)
class SimulationConfig:
    """How many paths to draw, with which scheme, from which seed."""

    n_paths: int
    seed: int | np.random.SeedSequence = 0
    scheme: str = "exact"
    substeps: int = 16
    quad_subdiv: int = DEFAULT_SUBDIV

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValidationError("n_paths must be >= 1")
        if self.scheme not in SCHEMES:
            raise ValidationError(f"unknown scheme {self.scheme!r}, expected one of {SCHEMES}")
        if self.substeps < 1:
            raise ValidationError("substeps must be >= 1")


def _path_streams(seed, n_paths):
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.PCG64(child)) for child in ss.spawn(n_paths)]


def simulate(params, C, D, V, design, config, label=""):
    """Draw a panel of sample paths from the model.

    The exact scheme samples each X(t_{j+1}) | X(t_j) from its lognormal
    transition law.  Euler-Maruyama integrates the state equation on the
    grid refined `substeps`-fold, without positivity clamping: paths that
    hit a non-positive state are dropped and reported, and the whole panel
    fails if more than 1% of paths are lost.
    """
    if config.scheme == "exact":
        values = _simulate_exact(params, C, D, V, design, config)
        failed = ()
    else:
        values, failed = _simulate_euler(params, C, D, V, design, config)
    return PathPanel(design=design, values=values, label=label, failed_paths=failed)


def _simulate_exact(params, C, D, V, design, config):
    kbar, theta, omega = grid_transitions(params, C, D, V, design,
                                          subdiv=config.quad_subdiv)
    sd = params.sigma * np.sqrt(omega)
    n = design.n_times
    streams = _path_streams(config.seed, config.n_paths)
    noise = np.stack([rng.standard_normal(n - 1) for rng in streams])
    lnx = np.empty((config.n_paths, n))
    lnx[:, 0] = np.log(design.x0)
    for j in range(n - 1):
        lnx[:, j + 1] = kbar[j] * lnx[:, j] + theta[j] + sd[j] * noise[:, j]
    values = np.exp(lnx)
    values[:, 0] = design.x0
    return values


def _simulate_euler(params, C, D, V, design, config):
    grid = design.grid
    sub = config.substeps
    # refined time points, keeping the observation times as exact nodes
    fine = np.concatenate(
        [np.linspace(grid[j], grid[j + 1], sub, endpoint=False) for j in range(grid.size - 1)]
        + [grid[-1:]]
    )
    h = np.diff(fine)
    cg = C(fine[:-1])
    dg = D(fine[:-1])
    vg = V(fine[:-1])
    drift_a = params.alpha - cg
    drift_b = params.beta - dg
    diff_sd = params.sigma * np.sqrt(vg * h)

    streams = _path_streams(config.seed, config.n_paths)
    n_fine = fine.size
    keep = slice(None, None, sub)
    rows = []
    failed = []
    for i, rng in enumerate(streams):
        noise = rng.standard_normal(n_fine - 1)
        x = np.empty(n_fine)
        x[0] = design.x0
        alive = True
        for k in range(n_fine - 1):
            xk = x[k]
            x[k + 1] = xk + (drift_a[k] - drift_b[k] * np.log(xk)) * xk * h[k] \
                + diff_sd[k] * xk * noise[k]
            if x[k + 1] <= 0:
                alive = False
                break
        if alive:
            rows.append(x[keep])
        else:
            failed.append(i)
    if len(failed) > 0.01 * config.n_paths:
        raise SimulationError(
            f"{len(failed)} of {config.n_paths} Euler paths became non-positive"
        )
    if not rows:
        raise SimulationError("all Euler paths became non-positive")
    values = np.stack(rows)
    values[:, 0] = design.x0
    return values, tuple(failed)
