import numpy as np
import pytest

from gompertz_therapy import TherapyProfile, ValidationError
from gompertz_therapy.profiles import lognormal_pdf


def test_constant_kinds_evaluate():
    t = np.linspace(0, 50, 11)
    assert np.all(TherapyProfile.zero("C")(t) == 0.0)
    assert np.all(TherapyProfile.one("V")(t) == 1.0)
    assert np.all(TherapyProfile.constant(-0.05, "D")(t) == -0.05)


def test_scalar_evaluation_returns_scalar():
    p = TherapyProfile.constant(0.3, "C")
    assert np.ndim(p(2.5)) == 0


def test_grid_profile_hits_knots_exactly():
    grid = np.linspace(0.0, 50.0, 51)
    rng = np.random.default_rng(5)
    vals = 0.5 + rng.random(51)
    p = TherapyProfile.from_grid(grid, vals, "V")
    assert np.array_equal(p(grid), vals)  # bit-for-bit at the knots


def test_grid_profile_natural_boundary():
    grid = np.linspace(0.0, 10.0, 21)
    vals = np.sin(grid)
    p = TherapyProfile.from_grid(grid, vals, "C")
    # natural spline: vanishing second derivative at both end knots
    assert abs(p._spline(grid[0], 2)) < 1e-10
    assert abs(p._spline(grid[-1], 2)) < 1e-10


def test_role_v_positivity_enforced():
    with pytest.raises(ValidationError):
        TherapyProfile.from_grid([0, 1, 2], [1.0, -0.1, 1.0], "V")
    with pytest.raises(ValidationError):
        TherapyProfile.constant(0.0, "V")
    TherapyProfile.from_grid([0, 1, 2], [1.0, -0.1, 1.0], "C")  # fine for rates


def test_check_positive_on_samples_formula():
    p = TherapyProfile.linear(-0.01, "V")
    with pytest.raises(ValidationError):
        p.check_positive_on(np.linspace(0, 50, 51))


def test_linear_and_rational_bump_values():
    assert TherapyProfile.linear(0.005, "C")(10.0) == pytest.approx(0.05, abs=1e-15)
    d = TherapyProfile.rational_bump(-0.12, 50.0, 10.0, "D")
    assert d(10.0) == pytest.approx(-0.24, abs=1e-15)
    assert d(0.0) == 0.0


def test_lognormal_bump_matches_direct_formula():
    v = TherapyProfile.lognormal_bump(0.7, 10.0, 3.0, 0.5, "V")
    t = np.exp(3.0)
    pdf = np.exp(-((np.log(t) - 3.0) ** 2) / 1.0) / (t * np.sqrt(np.pi))
    assert v(t) == pytest.approx((0.7 + 10.0 * pdf) ** 2, rel=1e-12)
    assert v(0.0) == pytest.approx(0.49)  # density vanishes at the origin


def test_lognormal_pdf_integrates_to_one():
    t = np.linspace(1e-9, 400.0, 400001)
    total = np.trapezoid(lognormal_pdf(t, 3.0, 0.5), t)
    assert total == pytest.approx(1.0, abs=1e-4)


def test_invalid_kinds_rejected():
    with pytest.raises(ValidationError):
        TherapyProfile(role="C", kind="nope")
    with pytest.raises(ValidationError):
        TherapyProfile(role="Q", kind="zero")
    with pytest.raises(ValidationError):
        TherapyProfile.from_grid([0, 0, 1], [1, 1, 1], "C")
