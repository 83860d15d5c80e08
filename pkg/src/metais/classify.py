"""Probabilistic classification of the failure domain and the derived
quasi-optimal instrumental density.

``pi(x)`` is the probability, under the Gaussian predictive distribution of
the surrogate, that the performance function is nonpositive at ``x``.  It is
floored at machine precision so that reciprocals and logs stay finite, and
switches to the deterministic 0/1 limit at interpolated points where the
predictive deviation vanishes.  The instrumental density is the unnormalized
product ``pi(x) * f_X(x)``, sampled by MCMC elsewhere.
"""

import math

import numpy as np
from scipy import special

__all__ = [
    "PI_FLOOR",
    "ClassificationFunction",
    "InstrumentalDensity",
    "pi_from_moments",
    "u_criterion",
    "u_criterion_batch",
]

PI_FLOOR = 1e-16
# Predictive deviations below this fraction of the process standard deviation
# are treated as interpolated points (exact-limit classification).
SIGMA_TOL_REL = 1e-9


def pi_from_moments(mu, sigma, sigma_tol, floor=PI_FLOOR):
    """Classification probability from predictive moments, floored to
    [floor, 1 - floor]."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    safe = np.where(sigma > sigma_tol, sigma, 1.0)
    smooth = special.ndtr(-mu / safe)
    hard = (mu <= 0.0).astype(float)
    out = np.where(sigma > sigma_tol, smooth, hard)
    return np.clip(out, floor, 1.0 - floor)


class ClassificationFunction:
    """Probability that the surrogate predicts failure at a point."""

    def __init__(self, model, floor=PI_FLOOR):
        self.model = model
        self.floor = floor

    @property
    def sigma_tol(self):
        return SIGMA_TOL_REL * math.sqrt(max(self.model.process_variance, 0.0))

    def pi(self, x):
        return float(self.pi_batch(np.asarray(x, dtype=float)[None, :])[0])

    def pi_batch(self, xs):
        mu, sigma = self.model.predict_batch(xs)
        return pi_from_moments(mu, sigma, self.sigma_tol, self.floor)


class InstrumentalDensity:
    """Unnormalized quasi-optimal importance density pi(x) * f_X(x).

    The log form is the interface used by the MCMC sampler; it is finite
    wherever the input density is positive (the pi floor guarantees it).
    """

    def __init__(self, classification, input_model):
        self.classification = classification
        self.input_model = input_model

    def log_hstar(self, x):
        return float(self.log_hstar_batch(np.asarray(x, dtype=float)[None, :])[0])

    def log_hstar_batch(self, xs):
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        log_f = self.input_model.log_pdf(xs)
        out = np.full(xs.shape[0], -np.inf)
        inside = np.isfinite(log_f)
        if np.any(inside):
            pi = self.classification.pi_batch(xs[inside])
            out[inside] = np.log(pi) + log_f[inside]
        return out

    def default_seeds(self, rng, n_prior=10_000, n_fresh=16):
        """Chain seeds: design points predicted failing, plus an importance
        resample of a fresh prior sample weighted by the classification
        probability.

        The resampled seeds approximate draws from the instrumental density
        itself and cover its modes in proportion to their mass, so chains can
        discover failure regions the design has not touched yet.  Seeding
        only at known failure points pins every chain to the modes already
        found (stepping-out cannot cross the density gap between separated
        modes).
        """
        model = self.classification.model
        y = model.doe.observations
        failing = model.doe.points[y <= 0.0]
        sample = self.input_model.sample(n_prior, rng)
        weights = self.classification.pi_batch(sample)
        weights = weights / weights.sum()
        fresh = sample[rng.choice(n_prior, size=max(n_fresh, 1), p=weights)]
        if failing.shape[0] > 0:
            return np.vstack([failing, fresh])
        return fresh


def u_criterion(model, x):
    """Standardized distance of the predicted mean to the failure threshold,
    |mu|/sigma; +inf where the deviation is zero (surely classified)."""
    mu, sigma = model.predict(np.asarray(x, dtype=float))
    if sigma <= 0.0:
        return math.inf
    return abs(mu) / sigma

def u_criterion_batch(model, xs):
    mu, sigma = model.predict_batch(xs)
    out = np.full(mu.shape, np.inf)
    pos = sigma > 0.0
    out[pos] = np.abs(mu[pos]) / sigma[pos]
    return out
