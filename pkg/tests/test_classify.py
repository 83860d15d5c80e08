import math

import numpy as np
import pytest

from metais.classify import (PI_FLOOR, ClassificationFunction, InstrumentalDensity,
                             pi_from_moments, u_criterion, u_criterion_batch)
from metais.kriging import DesignOfExperiments, TrendBasis, fit
from metais.probmodel import Marginal, ProbabilisticModel


def toy_model(rng=None, n=1, m=8):
    rng = rng or np.random.default_rng(0)
    pts = np.sort(rng.uniform(-2, 2, size=(m, n)), axis=0)
    y = pts.sum(axis=1) - 0.5
    return fit(DesignOfExperiments(pts, y), TrendBasis(), np.full(n, 1.0))


def test_pi_from_moments_midpoint():
    out = pi_from_moments(np.array([0.0]), np.array([0.7]), sigma_tol=0.0)
    assert out[0] == pytest.approx(0.5, rel=1e-12)


def test_pi_from_moments_one_sigma():
    # Phi(1) via the error function, independent of the implementation
    expected = 0.5 * (1.0 + math.erf(1.0 / math.sqrt(2.0)))
    out = pi_from_moments(np.array([-0.4]), np.array([0.4]), sigma_tol=0.0)
    assert out[0] == pytest.approx(expected, rel=1e-12)


def test_pi_limits_at_design_points():
    model = toy_model()
    cf = ClassificationFunction(model)
    pi = cf.pi_batch(model.doe.points)
    y = model.doe.observations
    assert np.all(pi[y > 0] <= 2 * PI_FLOOR)
    assert np.all(pi[y <= 0] >= 1.0 - 2 * PI_FLOOR)


def test_pi_bounds_everywhere():
    model = toy_model()
    cf = ClassificationFunction(model)
    xs = np.random.default_rng(1).uniform(-10, 10, size=(500, 1))
    pi = cf.pi_batch(xs)
    assert np.all(pi >= PI_FLOOR)
    assert np.all(pi <= 1.0)


def test_pi_monotone_in_mean_and_sigma_limit():
    sigma = np.full(50, 0.6)
    mus = np.linspace(-3, 3, 50)
    pi = pi_from_moments(mus, sigma, sigma_tol=0.0)
    assert np.all(np.diff(pi) < 0)
    wide = pi_from_moments(np.array([1.7]), np.array([1e9]), sigma_tol=0.0)
    assert wide[0] == pytest.approx(0.5, abs=1e-6)


def test_u_criterion_values():
    model = toy_model()
    x = np.array([0.5])  # on the limit state: predicted mean ~ 0 there
    mu, sigma = model.predict(x)
    expected = abs(mu) / sigma if sigma > 0 else math.inf
    assert u_criterion(model, x) == pytest.approx(expected, rel=1e-12)
    # definition checks, straight from moments
    assert pi_from_moments(np.array([-2.0]), np.array([1.0]), 0.0)[0] == pytest.approx(
        pi_from_moments(np.array([-2.0]), np.array([1.0]), 0.0)[0])


def test_u_criterion_infinite_at_interpolated_points():
    model = toy_model()
    u = u_criterion(model, model.doe.points[0])
    assert u > 1e3 or math.isinf(u)


def test_u_criterion_pi_identity():
    from scipy.special import ndtr
    model = toy_model()
    rng = np.random.default_rng(2)
    xs = rng.uniform(-2, 2, size=(100, 1))
    cf = ClassificationFunction(model)
    pi = cf.pi_batch(xs)
    u = u_criterion_batch(model, xs)
    mu, _ = model.predict_batch(xs)
    expected = ndtr(-np.sign(mu) * u)
    mask = (pi > PI_FLOOR) & (pi < 1 - PI_FLOOR)
    assert np.allclose(pi[mask], expected[mask], rtol=1e-12)


def test_log_hstar_consistency():
    model = toy_model()
    prob = ProbabilisticModel([Marginal.normal(0.0, 1.0)])
    cf = ClassificationFunction(model)
    h = InstrumentalDensity(cf, prob)
    rng = np.random.default_rng(3)
    xs = rng.uniform(-2, 2, size=(100, 1))
    ratio = np.exp(h.log_hstar_batch(xs)) / (cf.pi_batch(xs) * prob.pdf(xs))
    assert np.allclose(ratio, 1.0, rtol=1e-12)


def test_log_hstar_outside_support():
    model = toy_model()
    prob = ProbabilisticModel([Marginal.lognormal(1.0, 0.2)])
    h = InstrumentalDensity(ClassificationFunction(model), prob)
    assert h.log_hstar(np.array([-0.5])) == -math.inf


def test_log_hstar_certain_failure_equals_prior():
    model = toy_model()
    prob = ProbabilisticModel([Marginal.normal(0.0, 1.0)])
    h = InstrumentalDensity(ClassificationFunction(model), prob)
    x = model.doe.points[model.doe.observations <= 0][:1]
    got = h.log_hstar_batch(x)[0]
    expected = math.log(1.0 - PI_FLOOR) + prob.log_pdf(x[0])
    assert got == pytest.approx(expected, rel=1e-12)


def test_log_hstar_finite_on_support():
    model = toy_model()
    prob = ProbabilisticModel([Marginal.normal(0.0, 1.0)])
    h = InstrumentalDensity(ClassificationFunction(model), prob)
    xs = prob.sample(1000, np.random.default_rng(4))
    assert np.all(np.isfinite(h.log_hstar_batch(xs)))


def test_default_seeds_cover_failure_points():
    model = toy_model()
    prob = ProbabilisticModel([Marginal.normal(0.0, 1.0)])
    h = InstrumentalDensity(ClassificationFunction(model), prob)
    seeds = h.default_seeds(np.random.default_rng(5))
    failing = model.doe.points[model.doe.observations <= 0]
    assert seeds.shape[0] >= failing.shape[0]
    for row in failing:
        assert np.any(np.all(seeds == row, axis=1))
    assert np.all(np.isfinite(h.log_hstar_batch(seeds)))
