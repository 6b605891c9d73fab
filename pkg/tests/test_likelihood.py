import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from segtrial import irma2
from segtrial.data import SubjectRecord, TrialDataset, reconstruct_records_from_bins
from segtrial.errors import (
    BoundaryMismatchError,
    DegenerateDistributionError,
    DomainError,
    InsufficientDataError,
    NumericalUnderflowError,
)
from segtrial.likelihood import (
    DichotomousLikelihoods,
    GaussianParams,
    OutcomeModel,
    TailAreas,
    check_intervention_independence,
    dichotomous_counts,
    empirical_dichotomous,
    fit_log_gaussian,
    fit_outcome_model,
    interval_likelihood_ratio,
    normal_cdf,
    point_likelihood_ratio,
    sample_truncated_log,
    tail_likelihood_ratio,
    truncation_mass,
)


def _mp_cdf(z):
    return float(mpmath.ncdf(mpmath.mpf(z)))


@pytest.mark.parametrize("z", [-37.0, -8.0, -3.3, -1.0, 0.0, 0.5, 1.96, 6.0])
def test_normal_cdf_against_mpmath(z):
    ref = _mp_cdf(z)
    assert normal_cdf(z) == pytest.approx(ref, rel=1e-12, abs=1e-300)


@settings(max_examples=200, deadline=None)
@given(st.floats(-30, 30))
def test_normal_cdf_symmetry_and_mpmath(z):
    assert normal_cdf(z) + normal_cdf(-z) == pytest.approx(1.0, abs=1e-15)
    assert normal_cdf(z) == pytest.approx(_mp_cdf(z), rel=1e-11, abs=1e-300)


def test_fit_log_gaussian_matches_direct_formula():
    x = [20.0, 35.0, 80.0, 110.0, 190.0]
    y = [math.log(v) for v in x]
    mu = sum(y) / len(y)
    sd = math.sqrt(sum((v - mu) ** 2 for v in y) / (len(y) - 1))
    p = fit_log_gaussian(x)
    assert p.mu == pytest.approx(mu, rel=1e-14)
    assert p.sigma == pytest.approx(sd, rel=1e-14)
    assert p.n == 5


def test_fit_errors():
    with pytest.raises(InsufficientDataError):
        fit_log_gaussian([40.0])
    with pytest.raises(DomainError):
        fit_log_gaussian([40.0, 0.0])
    with pytest.raises(DegenerateDistributionError):
        fit_log_gaussian([40.0, 40.0, 40.0])


def _density(p: GaussianParams, y):
    return math.exp(-0.5 * ((y - p.mu) / p.sigma) ** 2) / (p.sigma * math.sqrt(2 * math.pi))


@pytest.mark.parametrize("v", [20.0, 55.0, 80.0, 119.0, 200.0])
def test_point_lr_is_density_ratio(v):
    m = irma2.PUBLISHED_MODEL
    y = math.log(v)
    ref = _density(m.with_outcome, y) / _density(m.without_outcome, y)
    assert point_likelihood_ratio(m, v) == pytest.approx(ref, rel=1e-12)


def test_point_lr_vectorised():
    v = np.array([30.0, 90.0])
    out = point_likelihood_ratio(irma2.PUBLISHED_MODEL, v)
    assert out.shape == (2,)
    assert out[1] == pytest.approx(point_likelihood_ratio(irma2.PUBLISHED_MODEL, 90.0))


def test_stated_tail_areas_and_parameters():
    y = math.log(80)
    m = irma2.STATED_TAIL_PARAMS
    assert m.without_outcome.cdf(y) == pytest.approx(0.787, abs=0.002)
    # the quoted outcome-group parameters do not give the quoted 0.360
    assert m.with_outcome.cdf(y) == pytest.approx(0.440, abs=0.001)
    assert GaussianParams(4.54, 0.45).cdf(y) == pytest.approx(0.360, abs=0.005)
    assert irma2.PUBLISHED_MODEL.with_outcome.cdf(y) == pytest.approx(0.353, abs=0.001)
    above = tail_likelihood_ratio(m, 80, "above")
    ref = (1 - _mp_cdf((math.log(80) - 4.45) / 0.45)) / (1 - _mp_cdf((math.log(80) - 3.65) / 0.913))
    assert above == pytest.approx(ref, rel=1e-10)


def test_tail_lr_underflow():
    m = OutcomeModel(GaussianParams(4.0, 0.3), GaussianParams(0.0, 0.1))
    with pytest.raises(NumericalUnderflowError):
        tail_likelihood_ratio(m, 80, "above")


def test_interval_lr_by_quadrature():
    m = irma2.PUBLISHED_MODEL

    def mass(p, lo, hi):
        return integrate.quad(lambda y: _density(p, y), math.log(lo), math.log(hi))[0]

    ref = mass(m.with_outcome, 40, 120) / mass(m.without_outcome, 40, 120)
    assert interval_likelihood_ratio(m, 40, 120) == pytest.approx(ref, rel=1e-9)
    assert interval_likelihood_ratio(m, 0, 80) == pytest.approx(tail_likelihood_ratio(m, 80, "below"), rel=1e-12)
    assert interval_likelihood_ratio(m, 80, math.inf) == pytest.approx(tail_likelihood_ratio(m, 80, "above"), rel=1e-12)


def test_truncation_mass_by_quadrature():
    p = GaussianParams(3.65, 0.91)
    ref = integrate.quad(lambda y: _density(p, y), math.log(20), math.log(200))[0]
    assert truncation_mass(p, 20, 200) == pytest.approx(ref, rel=1e-10)


def test_truncated_sampler_mean_by_quadrature():
    p = GaussianParams(3.65, 0.91)
    lo, hi = 20.0, 80.0
    u = (np.arange(200_000) + 0.5) / 200_000
    draws = sample_truncated_log(p, lo, hi, u)
    assert draws.min() >= lo and draws.max() <= hi
    a, b = math.log(lo), math.log(hi)
    z = integrate.quad(lambda y: _density(p, y), a, b)[0]
    ref = integrate.quad(lambda y: math.exp(y) * _density(p, y), a, b)[0] / z
    assert draws.mean() == pytest.approx(ref, rel=1e-4)


def test_dichotomous_published_ratios():
    lik = irma2.PUBLISHED_SEGMENTAL_LIKELIHOODS
    assert lik.ratio("above") == pytest.approx((19 / 29) / (47 / 171), rel=1e-15)
    assert lik.ratio("below") == pytest.approx((10 / 29) / (124 / 171), rel=1e-15)
    assert lik.to_dict()["events_high"] == 19


def test_dichotomous_validation():
    with pytest.raises(ValueError):
        DichotomousLikelihoods(80, 5, 4, 1, 10)
    with pytest.raises(InsufficientDataError):
        DichotomousLikelihoods(80, 0, 0, 1, 10)


def test_tail_areas_ratio():
    t = TailAreas(80, 0.360, 0.787)
    assert t.ratio("below") == pytest.approx(0.360 / 0.787)
    assert t.ratio("above") == pytest.approx(0.640 / 0.213)


def test_counts_from_builtin(irma, rule):
    assert dichotomous_counts(irma, 80) == (39, 59, 135, 516)
    from segtrial.data import apply_segment_filter

    seg = apply_segment_filter(irma, rule)
    assert dichotomous_counts(seg, 80) == (19, 29, 93, 217)
    with pytest.raises(BoundaryMismatchError):
        dichotomous_counts(irma, 100)
    lik = empirical_dichotomous(irma, 80, ["placebo"])
    assert lik.counts == (20, 30, 42, 166)


def test_independence_report_builtin_reconstruction(irma):
    recs = reconstruct_records_from_bins(irma.bins, "model_conditional", irma2.PUBLISHED_MODEL, seed=3)
    d = TrialDataset(records=tuple(recs), eligibility=(20, 200), control="placebo")
    rep = check_intervention_independence(d, 80)
    assert rep.stratum("placebo", True).n == 30
    assert rep.likelihood_gap["outcome"] == pytest.approx(abs(20 / 30 - 19 / 29))
    assert rep.max_mu_gap is not None and rep.max_mu_gap < 0.3
    assert set(rep.to_dict()) >= {"strata", "mu_gap", "sigma_gap", "likelihood_gap"}


def test_independence_needs_two_arms():
    d = TrialDataset(records=(SubjectRecord(30, "placebo", True), SubjectRecord(40, "placebo", False)))
    with pytest.raises(InsufficientDataError, match="both arms required"):
        check_intervention_independence(d, None)


def test_outcome_model_json_roundtrip():
    m = irma2.PUBLISHED_MODEL
    assert OutcomeModel.from_dict(m.to_dict()) == m


def test_fit_outcome_model_recovers_parameters():
    rng = np.random.default_rng(5)
    y1 = rng.normal(4.5, 0.4, 20_000)
    y0 = rng.normal(3.6, 0.9, 20_000)
    m = fit_outcome_model(np.exp(np.r_[y1, y0]), np.r_[np.ones(20_000, bool), np.zeros(20_000, bool)])
    assert m.with_outcome.mu == pytest.approx(4.5, abs=0.02)
    assert m.without_outcome.sigma == pytest.approx(0.9, abs=0.02)
