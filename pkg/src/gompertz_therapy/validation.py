"""Input-validation helpers shared by the estimator front end and the CLI."""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .simulate import PathPanel

__all__ = ["check_panel", "check_shared_grid", "check_probability", "check_positive"]


def check_panel(panel, name="panel", min_paths=1):
    """Assert the object is a well-formed PathPanel with enough subjects."""
    if not isinstance(panel, PathPanel):
        raise ValidationError(f"{name} must be a PathPanel, got {type(panel).__name__}")
    if panel.n_paths < min_paths:
        raise ValidationError(f"{name} needs at least {min_paths} sample paths")
    return panel


def check_shared_grid(*panels):
    """Assert all panels share one observation grid and initial state."""
    first = panels[0]
    for p in panels[1:]:
        if not np.array_equal(p.grid, first.grid):
            raise ValidationError("panels must share the same observation grid")
        if p.design.x0 != first.design.x0:
            raise ValidationError("panels must share the same initial state")
    return panels


def check_probability(value, name):
    value = float(value)
    if not 0 < value < 1:
        raise ValidationError(f"{name} must lie strictly between 0 and 1")
    return value


def check_positive(value, name):
    value = float(value)
    if not value > 0:
        raise ValidationError(f"{name} must be positive")
    return value
