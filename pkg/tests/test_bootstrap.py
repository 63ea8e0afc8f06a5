import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gompertz_therapy import (NumericError, PipelineSettings, TherapyProfile,
                              ValidationError, b_test, concatenated_protocol,
                              d_statistic, kde_null)
from gompertz_therapy.bootstrap import (Hypothesis, silverman_bandwidth,
                                        sheather_jones_bandwidth)
from gompertz_therapy.study import application_1, case_1, case_2, simulate_study


@pytest.fixture(scope="module")
def case2_setup():
    spec = case_2()
    control, g1, g2 = simulate_study(spec, 3)
    return spec, control, g1, g2


def v1_hypothesis(spec, g1, v1=0.5):
    zero_d = TherapyProfile.zero("D")
    h = TherapyProfile.constant(v1, "V")
    settings = PipelineSettings(ordering=spec.ordering)
    return Hypothesis(
        target="V1", h=h, group="g1", params=spec.params, design=spec.design,
        n_paths=g1.n_paths,
        sim_profiles=(spec.g1_profiles[0], zero_d, h),
        fitted=TherapyProfile.constant(v1 + 0.05, "V"),
        settings=settings, companion_d=np.zeros(spec.design.grid.size))


# -- the D statistic -----------------------------------------------------------


def test_d_statistic_identical_profiles_is_zero():
    grid = np.linspace(0, 50, 51)
    h = TherapyProfile.constant(0.49, "V")
    assert d_statistic(h, h, grid) == 0.0


def test_d_statistic_uniform_offset():
    grid = np.linspace(0, 50, 51)
    fitted = TherapyProfile.constant(0.5, "V")
    h = TherapyProfile.constant(0.49, "V")
    assert d_statistic(fitted, h, grid) == pytest.approx(0.51, rel=1e-12)


def test_d_statistic_excluded_points_contribute_zero():
    grid = np.linspace(0, 50, 51)
    fitted = TherapyProfile.constant(0.5, "V")
    h = TherapyProfile.constant(0.49, "V")
    exclude = np.zeros(51, bool)
    exclude[:2] = True
    assert d_statistic(fitted, h, grid, exclude=exclude) == pytest.approx(0.49, rel=1e-12)


# -- p-value semantics -----------------------------------------------------------


def test_tie_rule_all_replicates_equal(case2_setup):
    spec, control, g1, g2 = case2_setup
    hyp = v1_hypothesis(spec, g1)
    observed = d_statistic(hyp.fitted, hyp.h, spec.design.grid)
    res = b_test(hyp, g1, m=100, seed=0,
                 _replicate_override=lambda l: observed)
    assert res.p_value == 1.0


@given(st.lists(st.floats(0.0, 10.0), min_size=100, max_size=100),
       st.floats(0.0, 10.0))
@settings(max_examples=30, deadline=None)
def test_p_value_is_exact_proportion(reps, observed):
    reps = np.asarray(reps)
    spec = case_1()
    zero_d = TherapyProfile.zero("D")
    h = TherapyProfile.constant(1.0, "V")
    fitted = TherapyProfile.constant(1.0 + observed / 51.0, "V")
    hyp = Hypothesis(target="V1", h=h, group="g1", params=spec.params,
                     design=spec.design, n_paths=25,
                     sim_profiles=(TherapyProfile.zero("C"), zero_d, h),
                     fitted=fitted,
                     settings=PipelineSettings(ordering=spec.ordering),
                     companion_d=np.zeros(51))

    class FakePanel:
        n_paths = 25

    res = b_test(hyp, FakePanel(), m=100, seed=0,
                 _replicate_override=lambda l: float(reps[l]))
    expected = float(np.count_nonzero(reps >= res.statistic)) / reps.size
    assert res.p_value == expected


def test_monotone_in_observed_statistic(case2_setup):
    spec, control, g1, g2 = case2_setup
    rng = np.random.default_rng(0)
    reps = rng.uniform(0, 5, 200)
    p_values = []
    for offset in (0.01, 0.05, 0.10):
        hyp = v1_hypothesis(spec, g1, v1=0.5)
        hyp = Hypothesis(**{**hyp.__dict__,
                            "fitted": TherapyProfile.constant(0.5 + offset, "V")})
        res = b_test(hyp, g1, m=200, seed=1,
                     _replicate_override=lambda l: float(reps[l]))
        p_values.append(res.p_value)
    assert p_values[0] >= p_values[1] >= p_values[2]


def test_minimum_replicates_enforced(case2_setup):
    spec, control, g1, g2 = case2_setup
    with pytest.raises(ValidationError):
        b_test(v1_hypothesis(spec, g1), g1, m=50, seed=0)


def test_persistent_replicate_failure_aborts(case2_setup):
    # a single-path H0 panel cannot yield moment curves: every replicate
    # estimation fails, retries exhaust, and the test aborts loudly
    from gompertz_therapy.errors import EstimationError

    spec, control, g1, g2 = case2_setup
    hyp = v1_hypothesis(spec, g1)

    class OnePathPanel:
        n_paths = 1

    with pytest.raises(EstimationError, match="failed 3 times"):
        b_test(hyp, OnePathPanel(), m=100, seed=0)


def test_b_test_determinism(case2_setup):
    spec, control, g1, g2 = case2_setup
    hyp = v1_hypothesis(spec, g1)
    a = b_test(hyp, g1, m=120, seed=5)
    b = b_test(hyp, g1, m=120, seed=5)
    assert a.p_value == b.p_value
    assert np.array_equal(a.replicates, b.replicates)
    c = b_test(hyp, g1, m=120, seed=5, workers=4)
    assert np.array_equal(a.replicates, c.replicates)
    d = b_test(hyp, g1, m=120, seed=6)
    assert not np.array_equal(a.replicates, d.replicates)


# -- concatenated protocol ---------------------------------------------------------


def test_protocol_constant_truth_accepts(case2_setup):
    spec, control, g1, g2 = case2_setup
    res = concatenated_protocol(control, g1, g2,
                                settings=PipelineSettings(ordering=spec.ordering),
                                level=0.05, m=200, seed=42)
    assert [t.target for t in res.tests] == ["V1", "C", "V2", "D"]
    assert not any(t.reject for t in res.tests)
    # accepted constants land near the truth
    by_target = {t.target: t for t in res.tests}
    consts = {t: float(r.h_description.split("=")[1]) for t, r in by_target.items()}
    assert consts["C"] == pytest.approx(0.025, abs=0.01)
    assert consts["D"] == pytest.approx(-0.05, abs=0.01)
    assert consts["V1"] == pytest.approx(0.49, abs=0.15)
    assert consts["V2"] == pytest.approx(0.49, abs=0.15)
    # the post-test model carries the accepted constants
    for target in ("C", "D", "V1", "V2"):
        assert res.final_fit.profiles[target].is_constant


def test_protocol_time_varying_truth_rejects():
    spec = application_1()
    control, g1, g2 = simulate_study(spec, 3)
    res = concatenated_protocol(control, g1, g2,
                                settings=PipelineSettings(ordering=spec.ordering),
                                level=0.05, m=200, seed=42)
    by_target = {t.target: t for t in res.tests}
    assert by_target["V1"].reject
    assert by_target["C"].reject
    # rejected targets keep their fitted (non-constant) profiles
    assert not res.final_fit.profiles["C"].is_constant


def test_protocol_order_mirrors_for_death_first():
    spec = case_1()
    control, g1, g2 = simulate_study(spec, 9)
    res = concatenated_protocol(control, g1, g2,
                                settings=PipelineSettings(ordering="dif"),
                                level=0.05, m=200, seed=11)
    assert [t.target for t in res.tests] == ["V1", "D", "V2", "C"]


def test_protocol_determinism(case2_setup):
    spec, control, g1, g2 = case2_setup
    kw = dict(settings=PipelineSettings(ordering=spec.ordering), level=0.05,
              m=200, seed=7)
    a = concatenated_protocol(control, g1, g2, **kw)
    b = concatenated_protocol(control, g1, g2, **kw)
    for ta, tb in zip(a.tests, b.tests):
        assert ta.statistic == tb.statistic
        assert ta.p_value == tb.p_value


# -- kernel density summaries --------------------------------------------------------


def test_kde_matches_standard_normal_density():
    rng = np.random.default_rng(1)
    x = rng.standard_normal(10000)
    grid, dens, critical = kde_null(x, bandwidth="silverman")
    at_zero = dens[np.argmin(np.abs(grid))]
    assert at_zero == pytest.approx(1.0 / np.sqrt(2 * np.pi), abs=0.02)
    assert critical == pytest.approx(np.quantile(x, 0.95), rel=1e-12)


def test_kde_integrates_to_one():
    rng = np.random.default_rng(2)
    x = rng.gamma(3.0, 1.0, 2000)
    grid, dens, _ = kde_null(x)
    assert np.trapezoid(dens, grid) == pytest.approx(1.0, abs=1e-3)


def test_kde_zero_variance_errors():
    with pytest.raises(NumericError):
        kde_null(np.full(100, 2.5))
    with pytest.raises(ValidationError):
        kde_null(np.arange(10))


def test_sheather_jones_bandwidth_reasonable():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(500)
    h_sj = sheather_jones_bandwidth(x)
    h_silv = silverman_bandwidth(x)
    assert 0.2 * h_silv < h_sj < 5 * h_silv
    grid, dens, _ = kde_null(x, bandwidth="sheather_jones")
    assert np.trapezoid(dens, grid) == pytest.approx(1.0, abs=1e-2)
