"""Run configuration: a nested key/value file describing one study.

A config declares, per group, either simulation inputs (path count plus
therapy profiles, with the model parameters at top level) or an ingest
file, never both.  Pipeline, simulation and bootstrap knobs are optional
and default to the bundled study values.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import yaml

from .errors import ValidationError
from .inference import PipelineSettings
from .model import ModelParams, StudyDesign
from .profiles import TherapyProfile

__all__ = ["RunConfig", "load_config", "profile_from_spec", "bundled_config_path"]

GROUPS = ("control", "g1", "g2")

_PROFILE_BUILDERS = {
    "zero": (),
    "one": (),
    "constant": ("value",),
    "linear": ("slope",),
    "rational_bump": ("p", "q", "r"),
    "lognormal_bump": ("base", "scale", "mu", "s2"),
    "grid": ("knots",),
}


def profile_from_spec(spec, role):
    """Build a TherapyProfile from its config mapping."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ValidationError(f"profile spec for role {role} needs a 'kind' key")
    kind = spec["kind"]
    if kind not in _PROFILE_BUILDERS:
        raise ValidationError(f"unknown profile kind {kind!r}")
    needed = _PROFILE_BUILDERS[kind]
    missing = [k for k in needed if k not in spec]
    if missing:
        raise ValidationError(f"profile kind {kind!r} needs keys {missing}")
    extra = set(spec) - set(needed) - {"kind"}
    if extra:
        raise ValidationError(f"profile kind {kind!r} got unknown keys {sorted(extra)}")
    if kind == "zero":
        return TherapyProfile.zero(role)
    if kind == "one":
        return TherapyProfile.one(role)
    if kind == "constant":
        return TherapyProfile.constant(spec["value"], role)
    if kind == "linear":
        return TherapyProfile.linear(spec["slope"], role)
    if kind == "rational_bump":
        return TherapyProfile.rational_bump(spec["p"], spec["q"], spec["r"], role)
    if kind == "lognormal_bump":
        return TherapyProfile.lognormal_bump(spec["base"], spec["scale"],
                                             spec["mu"], spec["s2"], role)
    knots = np.asarray(spec["knots"], dtype=float)
    if knots.ndim != 2 or knots.shape[1] != 2:
        raise ValidationError("grid profile knots must be a list of [t, value] pairs")
    return TherapyProfile.from_grid(knots[:, 0], knots[:, 1], role)


@dataclass(frozen=True)
class GroupSpec:
    """Simulation inputs or an ingest file for one experimental group."""

    name: str
    n_paths: int | None = None
    profiles: dict = field(default_factory=dict)  # role -> TherapyProfile
    file: str | None = None
    raw_profiles: dict = field(default_factory=dict)

    @property
    def simulated(self):
        return self.file is None


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved configuration of one run."""

    design: StudyDesign
    params: ModelParams | None
    groups: dict
    settings: PipelineSettings
    scheme: str = "exact"
    substeps: int = 16
    bootstrap_m: int = 1500
    level: float = 0.05
    seed: int = 0
    raw: dict = field(default_factory=dict, repr=False)

    def group_model_profiles(self, name):
        """(C, D, V) truth triple used to simulate a group."""
        spec = self.groups[name]
        if name == "control":
            return (TherapyProfile.zero("C"), TherapyProfile.zero("D"),
                    TherapyProfile.one("V"))
        c = spec.profiles.get("C", TherapyProfile.zero("C"))
        d = spec.profiles.get("D", TherapyProfile.zero("D"))
        v = spec.profiles.get("V", TherapyProfile.one("V"))
        return c, d, v

    def effective(self):
        """The fully resolved configuration, for embedding in artifacts."""
        out = {
            "study": {"t0": self.design.t0, "t_end": self.design.t_end,
                      "n_times": self.design.n_times, "x0": self.design.x0},
            "ordering": self.settings.ordering,
            "relation_form": self.settings.relation_form,
            "loess": {"span_rate": self.settings.loess_span_rate,
                      "span_variance": self.settings.loess_span_variance,
                      "degree": self.settings.loess_degree,
                      "iterations": self.settings.loess_iterations},
            "simulation": {"scheme": self.scheme, "substeps": self.substeps},
            "bootstrap": {"m": self.bootstrap_m, "level": self.level},
            "seed": self.seed,
            "groups": {},
        }
        if self.params is not None:
            out["params"] = {"alpha": self.params.alpha, "beta": self.params.beta,
                             "sigma": self.params.sigma}
        for name, spec in self.groups.items():
            if spec.simulated:
                out["groups"][name] = {"n_paths": spec.n_paths,
                                       "profiles": spec.raw_profiles}
            else:
                out["groups"][name] = {"file": spec.file}
        return out


def _parse_group(name, raw, base_dir):
    if not isinstance(raw, dict):
        raise ValidationError(f"group {name!r} must be a mapping")
    has_file = "file" in raw
    has_sim = "n_paths" in raw
    if has_file == has_sim:
        raise ValidationError(
            f"group {name!r} must declare exactly one of 'file' or 'n_paths'"
        )
    if has_file:
        path = raw["file"]
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        if not os.path.exists(path):
            raise ValidationError(f"group {name!r}: file not found: {path}")
        return GroupSpec(name=name, file=path)
    n_paths = int(raw["n_paths"])
    if n_paths < 1:
        raise ValidationError(f"group {name!r}: n_paths must be >= 1")
    raw_profiles = raw.get("profiles", {}) or {}
    if name == "control" and raw_profiles:
        raise ValidationError("the control group takes no therapy profiles")
    profiles = {}
    for role, spec in raw_profiles.items():
        if role not in ("C", "D", "V"):
            raise ValidationError(f"group {name!r}: unknown profile role {role!r}")
        profiles[role] = profile_from_spec(spec, role)
    return GroupSpec(name=name, n_paths=n_paths, profiles=profiles,
                     raw_profiles=raw_profiles)


def load_config(path, overrides=None):
    """Load and validate a YAML run configuration.

    `overrides` maps dotted knob names (seed, ordering, bootstrap_m, level,
    loess_span, loess_span_rate, loess_span_variance, loess_degree, scheme,
    relation_form) to replacement values, as supplied by CLI flags.
    """
    if not os.path.exists(path):
        raise ValidationError(f"config file not found: {path}")
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ValidationError(f"{path}: config must be a mapping")
    overrides = overrides or {}
    base_dir = os.path.dirname(os.path.abspath(path))

    study = raw.get("study", {})
    if "grid" in study:
        design = StudyDesign(grid=np.asarray(study["grid"], float),
                             x0=float(study.get("x0", 1.0)))
    else:
        design = StudyDesign.uniform(study.get("t0", 0.0), study.get("t_end", 50.0),
                                     study.get("n_times", 51),
                                     x0=float(study.get("x0", 1.0)))

    params = None
    if "params" in raw:
        p = raw["params"]
        params = ModelParams(alpha=float(p["alpha"]), beta=float(p["beta"]),
                             sigma=float(p["sigma"]))

    groups_raw = raw.get("groups", {})
    missing = [g for g in GROUPS if g not in groups_raw]
    if missing:
        raise ValidationError(f"config must declare groups {missing}")
    groups = {name: _parse_group(name, groups_raw[name], base_dir) for name in GROUPS}
    if params is None and any(g.simulated for g in groups.values()):
        raise ValidationError("simulated groups need top-level 'params'")
    for name, spec in groups.items():
        for role, profile in spec.profiles.items():
            if role == "V":
                profile.check_positive_on(design.grid)

    loess = raw.get("loess", {})
    span_rate = overrides.get("loess_span_rate",
                              overrides.get("loess_span", loess.get("span_rate", 0.15)))
    span_var = overrides.get("loess_span_variance",
                             overrides.get("loess_span", loess.get("span_variance", 0.5)))
    settings = PipelineSettings(
        ordering=overrides.get("ordering", raw.get("ordering", "apf")),
        relation_form=overrides.get("relation_form", raw.get("relation_form", "m2")),
        loess_span_rate=float(span_rate),
        loess_span_variance=float(span_var),
        loess_degree=int(overrides.get("loess_degree", loess.get("degree", 2))),
        loess_iterations=int(loess.get("iterations", 0)),
    )

    sim = raw.get("simulation", {})
    boot = raw.get("bootstrap", {})
    level = float(overrides.get("level", boot.get("level", 0.05)))
    if not 0 < level < 1:
        raise ValidationError("significance level must lie in (0, 1)")
    m = int(overrides.get("bootstrap_m", boot.get("m", 1500)))
    if m < 100:
        raise ValidationError("bootstrap m must be >= 100")
    return RunConfig(
        design=design, params=params, groups=groups, settings=settings,
        scheme=overrides.get("scheme", sim.get("scheme", "exact")),
        substeps=int(sim.get("substeps", 16)),
        bootstrap_m=m, level=level,
        seed=int(overrides.get("seed", raw.get("seed", 0))),
        raw=raw,
    )


def bundled_config_path(name):
    """Path of a configuration shipped with the package."""
    ref = resources.files("gompertz_therapy") / "configs" / f"{name}.yaml"
    if not ref.is_file():
        raise ValidationError(f"no bundled config named {name!r}")
    return str(ref)
