import math

import numpy as np
import pytest

from metais.probmodel import Marginal, ProbabilisticModel

ALL_KINDS = [
    Marginal.normal(0.0, 1.0),
    Marginal.normal(-3.0, 0.5),
    Marginal.lognormal(1.0, 0.2),
    Marginal.lognormal(5.0, 2.0),
    Marginal.uniform(2.0, 4.0),
]


def test_standard_normal_pdf_at_zero():
    model = ProbabilisticModel([Marginal.normal(0.0, 1.0)])
    assert model.pdf(np.array([0.0])) == pytest.approx(1.0 / math.sqrt(2 * math.pi), rel=1e-12)
    assert model.log_pdf(np.array([0.0])) == pytest.approx(-0.5 * math.log(2 * math.pi), rel=1e-12)


def test_lognormal_outside_support():
    model = ProbabilisticModel([Marginal.lognormal(1.0, 0.2)])
    assert model.pdf(np.array([-1.0])) == 0.0
    assert model.log_pdf(np.array([-1.0])) == -math.inf


def test_two_standard_normals_at_origin():
    model = ProbabilisticModel([Marginal.normal(0.0, 1.0)] * 2)
    assert model.pdf(np.zeros(2)) == pytest.approx(1.0 / (2 * math.pi), rel=1e-12)


def test_hundred_dimensional_log_density():
    model = ProbabilisticModel([Marginal.normal(0.0, 1.0)] * 100)
    assert model.log_pdf(np.zeros(100)) == pytest.approx(-50.0 * math.log(2 * math.pi), rel=1e-12)


def test_log_pdf_matches_pdf_where_positive():
    model = ProbabilisticModel(ALL_KINDS)
    rng = np.random.default_rng(0)
    pts = model.sample(100, rng)
    assert np.allclose(np.exp(model.log_pdf(pts)), model.pdf(pts), rtol=1e-12)


def test_joint_log_pdf_is_sum_of_marginals():
    model = ProbabilisticModel(ALL_KINDS)
    rng = np.random.default_rng(1)
    pts = model.sample(50, rng)
    expected = sum(m.log_pdf(pts[:, k]) for k, m in enumerate(model.marginals))
    assert np.allclose(model.log_pdf(pts), expected, rtol=1e-12, atol=1e-12)


def test_dimension_mismatch_raises():
    model = ProbabilisticModel([Marginal.normal(0.0, 1.0)] * 3)
    with pytest.raises(ValueError):
        model.pdf(np.zeros(2))
    with pytest.raises(ValueError):
        model.log_pdf(np.zeros((5, 4)))


def test_parameter_validation():
    with pytest.raises(ValueError):
        Marginal.normal(0.0, 0.0)
    with pytest.raises(ValueError):
        Marginal.lognormal(1.0, -0.1)
    with pytest.raises(ValueError):
        Marginal.uniform(2.0, 2.0)
    with pytest.raises(ValueError):
        Marginal("weibull", 1.0, 1.0)


def test_lognormal_moment_roundtrip():
    for mean, sd in [(1.0, 0.2), (5.0, 2.0), (0.1, 0.5)]:
        m = Marginal.lognormal(mean, sd)
        back_mean = math.exp(m._gauss_mu + 0.5 * m._gauss_sigma ** 2)
        back_var = back_mean ** 2 * (math.exp(m._gauss_sigma ** 2) - 1.0)
        assert back_mean == pytest.approx(mean, rel=1e-12)
        assert math.sqrt(back_var) == pytest.approx(sd, rel=1e-12)


def test_uniform_sample_mean():
    model = ProbabilisticModel([Marginal.uniform(0.0, 1.0)])
    pts = model.sample(100_000, np.random.default_rng(2))
    # 3 sigma band for the mean of uniforms: 3/(sqrt(12)*sqrt(N))
    assert abs(pts.mean() - 0.5) < 0.005


def test_lognormal_sample_mean():
    model = ProbabilisticModel([Marginal.lognormal(1.0, 0.2)])
    pts = model.sample(100_000, np.random.default_rng(3))
    assert abs(pts.mean() - 1.0) < 3 * 0.2 / math.sqrt(100_000)


def test_sampling_determinism():
    model = ProbabilisticModel(ALL_KINDS)
    a = model.sample(1, np.random.default_rng(42))
    b = model.sample(1, np.random.default_rng(42))
    assert np.array_equal(a, b)


def test_quantile_special_values():
    assert Marginal.normal(0.0, 1.0).quantile(0.5) == pytest.approx(0.0, abs=1e-12)
    assert Marginal.uniform(2.0, 4.0).quantile(0.25) == pytest.approx(2.5, rel=1e-12)
    m = Marginal.lognormal(1.0, 0.2)
    # closed-form median: exp of the underlying Gaussian mean
    assert m.quantile(0.5) == pytest.approx(1.0 / math.sqrt(1.04), rel=1e-10)


def test_quantile_domain():
    m = Marginal.normal(0.0, 1.0)
    for u in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(ValueError):
            m.quantile(u)


@pytest.mark.parametrize("marginal", ALL_KINDS)
def test_cdf_quantile_roundtrip(marginal):
    grid = np.array([0.001, 0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99, 0.999])
    back = marginal.cdf(marginal.quantile(grid))
    assert np.max(np.abs(back - grid)) < 1e-8


@pytest.mark.parametrize("marginal", ALL_KINDS)
def test_pdf_integrates_to_one(marginal):
    lo = marginal.quantile(1e-4)
    hi = marginal.quantile(1.0 - 1e-4)
    xs = np.linspace(lo, hi, 20_001)
    mass = np.trapezoid(marginal.pdf(xs), xs)
    assert mass == pytest.approx(0.9998, abs=1e-3)


@pytest.mark.parametrize("marginal", ALL_KINDS)
def test_empirical_moments(marginal):
    n = 1_000_000
    sample = marginal.sample(n, np.random.default_rng(7))
    se_mean = marginal.std() / math.sqrt(n)
    assert abs(sample.mean() - marginal.mean()) < 5 * se_mean
    # standard error of the sample sd via the delta method
    m4 = np.mean((sample - sample.mean()) ** 4)
    var = sample.var(ddof=1)
    se_sd = math.sqrt(max(m4 - var ** 2, 0.0) / n) / (2 * math.sqrt(var))
    assert abs(sample.std(ddof=1) - marginal.std()) < 5 * se_sd


def test_quantile_map_shape():
    model = ProbabilisticModel(ALL_KINDS)
    u = np.full((4, len(ALL_KINDS)), 0.5)
    pts = model.quantile_map(u)
    assert pts.shape == (4, len(ALL_KINDS))
    assert pts[0, 0] == pytest.approx(0.0, abs=1e-12)
