"""Numeric differentiation and local polynomial regression.

Both operate on possibly non-uniform, strictly increasing time grids.
Derivatives use three-point Lagrange stencils (exact on quadratics);
the smoother is a tricube-weighted local polynomial fit with optional
bisquare robustness iterations, able to skip masked points while still
predicting at them.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError

__all__ = ["derivative_matrix", "numeric_derivative", "loess"]


def _stencil_coeffs(x, xe):
    """Derivative at xe of the parabola through the three abscissae x."""
    x0, x1, x2 = x
    return np.array([
        (2 * xe - x1 - x2) / ((x0 - x1) * (x0 - x2)),
        (2 * xe - x0 - x2) / ((x1 - x0) * (x1 - x2)),
        (2 * xe - x0 - x1) / ((x2 - x0) * (x2 - x1)),
    ])


def derivative_matrix(grid):
    """Matrix mapping grid samples to first-derivative estimates.

    Interior points use the centered three-point stencil; both endpoints
    use one-sided second-order stencils.
    """
    grid = np.asarray(grid, dtype=float)
    n = grid.size
    if n < 3:
        raise ValidationError("numeric differentiation needs at least 3 points")
    if np.any(np.diff(grid) <= 0):
        raise ValidationError("grid must be strictly increasing")
    mat = np.zeros((n, n))
    mat[0, :3] = _stencil_coeffs(grid[:3], grid[0])
    mat[-1, -3:] = _stencil_coeffs(grid[-3:], grid[-1])
    for j in range(1, n - 1):
        mat[j, j - 1:j + 2] = _stencil_coeffs(grid[j - 1:j + 2], grid[j])
    return mat


def numeric_derivative(grid, values):
    """First derivative of sampled values on a strictly increasing grid."""
    values = np.asarray(values, dtype=float)
    mat = derivative_matrix(grid)
    if values.shape[-1] != mat.shape[0]:
        raise ValidationError("values length must match the grid")
    return values @ mat.T


def _local_fit(tf, yf, eval_t, k, degree, robust):
    """Weighted local polynomial fit evaluated at eval_t."""
    dist = np.abs(eval_t[:, None] - tf[None, :])
    dmax = np.maximum(np.sort(dist, axis=1)[:, k - 1], np.finfo(float).tiny)
    w = (1.0 - np.clip(dist / dmax[:, None], 0.0, 1.0) ** 3) ** 3
    w = w * robust[None, :]
    dt = tf[None, :] - eval_t[:, None]
    basis = np.stack([dt**d for d in range(degree + 1)], axis=2)
    a_mat = np.einsum("ek,ekp,ekq->epq", w, basis, basis)
    b_vec = np.einsum("ek,ekp,ek->ep", w, basis, yf[None, :])
    try:
        coef = np.linalg.solve(a_mat, b_vec[..., None])[..., 0]
    except np.linalg.LinAlgError:
        coef = np.stack([np.linalg.lstsq(a, b, rcond=None)[0]
                         for a, b in zip(a_mat, b_vec)])
    return coef[:, 0]


def loess(t, y, span=0.5, degree=2, iterations=2, missing=None, eval_t=None):
    """Tricube-weighted local polynomial smoother.

    Fits a degree-1 or degree-2 polynomial in a moving window holding a
    `span` fraction of the points, evaluated at each requested time.  The
    window widens to degree + 2 points when the span would leave too few.
    `iterations` bisquare reweighting passes downweight outliers.  Points
    flagged in `missing` are excluded from fitting but still predicted.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise ValidationError("t and y must be matching 1-d arrays")
    if not 0 < span <= 1:
        raise ValidationError("span must lie in (0, 1]")
    if degree not in (1, 2):
        raise ValidationError("degree must be 1 or 2")
    if missing is None:
        missing = ~np.isfinite(y)
    else:
        missing = np.asarray(missing, bool) | ~np.isfinite(y)
    tf = t[~missing]
    yf = y[~missing]
    n_fit = tf.size
    if n_fit < degree + 2:
        raise ValidationError(f"loess needs at least {degree + 2} usable points")
    eval_t = t if eval_t is None else np.atleast_1d(np.asarray(eval_t, dtype=float))

    k = min(n_fit, max(degree + 2, int(np.ceil(span * n_fit))))
    robust = np.ones(n_fit)
    for _ in range(iterations):
        res = yf - _local_fit(tf, yf, tf, k, degree, robust)
        s = np.median(np.abs(res))
        if s <= 0:
            break
        robust = np.clip(res / (6.0 * s), -1.0, 1.0)
        robust = (1.0 - robust**2) ** 2
    return _local_fit(tf, yf, eval_t, k, degree, robust)
