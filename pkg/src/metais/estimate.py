"""Failure-probability estimators.

Crude Monte Carlo and generic importance sampling work on the true limit
state.  The two-factor scheme splits the probability into an augmented term
(expectation of the classification probability under the input density, no
true-model calls) and a correction factor (expectation of indicator/pi under
the quasi-optimal instrumental density, one true-model call per sample); their
product is unbiased and the coefficients of variation combine exactly as
sqrt(d1^2 + d2^2 + d1^2*d2^2) by independence.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .classify import PI_FLOOR, SIGMA_TOL_REL, pi_from_moments
from .mcmc import SliceSampler

__all__ = [
    "Estimate",
    "MetaISResult",
    "DominationError",
    "crude_mc",
    "importance_sampling",
    "augmented_pf",
    "correction_factor",
    "combine",
    "combined_cov_approx",
    "loo_correction_factor",
]

log = logging.getLogger(__name__)


class DominationError(RuntimeError):
    """The instrumental density vanished at a sampled point."""


@dataclass
class Estimate:
    """Monte Carlo estimate with its dispersion and call accounting."""

    value: float
    std_dev: float
    n_samples: int
    n_g_evals: int
    flags: tuple = ()
    cov: float = field(init=False)

    def __post_init__(self):
        self.cov = self.std_dev / self.value if self.value > 0.0 else math.inf

    def to_dict(self):
        return {
            "value": self.value,
            "std_dev": self.std_dev,
            "cov": self.cov,
            "n_samples": self.n_samples,
            "n_g_evals": self.n_g_evals,
            "flags": list(self.flags),
        }


@dataclass
class MetaISResult:
    pf_eps: Estimate
    alpha_corr: Estimate
    pf: Estimate
    doe_size: int
    iterations: int

    def to_dict(self):
        return {
            "pf_eps": self.pf_eps.to_dict(),
            "alpha_corr": self.alpha_corr.to_dict(),
            "pf": self.pf.to_dict(),
            "doe_size": self.doe_size,
            "iterations": self.iterations,
        }


class _RunningMoments:
    """Streaming mean and centered second moment (deterministic merge)."""

    def __init__(self):
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0

    def update(self, values):
        nb = values.size
        if nb == 0:
            return
        mean_b = float(values.mean())
        m2_b = float(((values - mean_b) ** 2).sum())
        delta = mean_b - self.mean
        total = self.n + nb
        self.mean += delta * nb / total
        self.m2 += m2_b + delta * delta * self.n * nb / total
        self.n = total

    def std_of_mean(self):
        if self.n < 2:
            return math.inf
        return math.sqrt(self.m2 / (self.n - 1) / self.n)


def crude_mc(g, model, target_cov, n_max, batch=10_000, rng=None):
    """Indicator-average estimator, run until the target coefficient of
    variation or the sample budget is reached.

    The standard deviation is the binomial sqrt(p(1-p)/N).  A run that sees no
    failure returns a flagged zero with an infinite coefficient of variation.
    """
    if not 0.0 < target_cov < 1.0:
        raise ValueError("target_cov must lie in (0, 1)")
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    failures = 0
    n = 0
    while n < n_max:
        nb = min(batch, n_max - n)
        values = np.asarray(g(model.sample(nb, rng)))
        failures += int(np.count_nonzero(values <= 0.0))
        n += nb
        p = failures / n
        std = math.sqrt(p * (1.0 - p) / n)
        cov = std / p if p > 0.0 else math.inf
        log.info("crude_mc batch n=%d value=%.6e cov=%.4g", n, p, cov)
        if cov <= target_cov:
            break
    flags = ("zero_failures",) if failures == 0 else ()
    return Estimate(p, std, n, n, flags)


def importance_sampling(g, model, instrumental, n, rng):
    """Weighted-indicator estimator under a normalized instrumental density.

    ``instrumental`` must provide ``sample(count, rng)`` and ``pdf(points)``
    and must dominate the failure-restricted input density.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    x = instrumental.sample(n, rng)
    values = np.asarray(g(x))
    h = np.asarray(instrumental.pdf(x), dtype=float)
    if np.any(h <= 0.0):
        raise DominationError("instrumental density is zero at a sampled point")
    weights = np.where(values <= 0.0, model.pdf(x) / h, 0.0)
    value = float(weights.mean())
    # two-pass form: exact zero spread for constant weights
    s2 = float(((weights - value) ** 2).sum()) / (n - 1) if n > 1 else math.inf
    std = math.sqrt(s2 / n) if np.isfinite(s2) else math.inf
    return Estimate(value, std, n, n)


def augmented_pf(cf, model, target_cov, n_max=10_000_000, batch=1000, rng=None):
    """Mean classification probability under the input density.

    Consumes surrogate predictions only: zero true-model calls.
    """
    if not 0.0 < target_cov < 1.0:
        raise ValueError("target_cov must lie in (0, 1)")
    acc = _RunningMoments()
    while acc.n < n_max:
        nb = min(batch, n_max - acc.n)
        acc.update(cf.pi_batch(model.sample(nb, rng)))
        std = acc.std_of_mean()
        cov = std / acc.mean if acc.mean > 0.0 else math.inf
        log.info("augmented_pf batch n=%d value=%.6e cov=%.4g", acc.n, acc.mean, cov)
        if cov <= target_cov:
            break
    return Estimate(acc.mean, acc.std_of_mean() if acc.n > 1 else 0.0, acc.n, 0)


def correction_factor(g, cf, hstar, mcmc_config, target_cov, n_max, rng,
                      batch=50, seeds=None):
    """Mean of indicator/pi over the quasi-optimal instrumental density.

    Samples are drawn by slice sampling from the unnormalized density and each
    one costs a true limit-state call.  Thinned samples are treated as
    independent in the variance.  Ratio terms whose classification sits at the
    floor while the point truly fails are counted as pathological.
    """
    if not 0.0 < target_cov < 1.0:
        raise ValueError("target_cov must lie in (0, 1)")
    if n_max < 1:
        raise ValueError("no sampling budget left for the correction factor")
    if seeds is None:
        seeds = hstar.default_seeds(rng)
    sampler = SliceSampler(hstar.log_hstar_batch, seeds, mcmc_config, rng)
    acc = _RunningMoments()
    pathological = 0
    while acc.n < n_max:
        nb = min(batch, n_max - acc.n)
        pts = sampler.draw(nb)
        failing = np.asarray(g(pts)) <= 0.0
        pi = cf.pi_batch(pts)
        pathological += int(np.count_nonzero(failing & (pi <= PI_FLOOR)))
        acc.update(np.where(failing, 1.0 / pi, 0.0))
        std = acc.std_of_mean()
        cov = std / acc.mean if acc.mean > 0.0 else math.inf
        log.info("correction batch n=%d value=%.6e cov=%.4g", acc.n, acc.mean, cov)
        if cov <= target_cov:
            break
    flags = []
    if pathological:
        flags.append(f"pathological_ratio_terms:{pathological}")
    if acc.mean == 0.0:
        flags.append("zero_failures")
    return Estimate(acc.mean, acc.std_of_mean() if acc.n > 1 else 0.0,
                    acc.n, acc.n, tuple(flags))


def combine(pf_eps, alpha_corr):
    """Product estimate with the exact coefficient of variation of a product
    of independent estimators: sqrt(d1^2 + d2^2 + d1^2*d2^2)."""
    d1, d2 = pf_eps.cov, alpha_corr.cov
    if not (math.isfinite(d1) and math.isfinite(d2)):
        raise ValueError("cannot combine estimates with non-finite coefficients of variation")
    value = pf_eps.value * alpha_corr.value
    cov = math.sqrt(d1 * d1 + d2 * d2 + d1 * d1 * d2 * d2)
    return Estimate(value, cov * value,
                    pf_eps.n_samples + alpha_corr.n_samples,
                    pf_eps.n_g_evals + alpha_corr.n_g_evals,
                    pf_eps.flags + alpha_corr.flags)


def combined_cov_approx(d1, d2):
    """Small-dispersion approximation sqrt(d1^2 + d2^2), for comparison only."""
    return math.sqrt(d1 * d1 + d2 * d2)


def loo_correction_factor(model, floor=PI_FLOOR):
    """Leave-one-out proxy of the correction factor from the design only.

    Averages indicator/pi over the design points with pi taken from the
    leave-one-out predictions; costs no new limit-state calls.  Values near
    one indicate the classification has converged around the design.
    """
    y = model.doe.observations
    mu, sigma = model.loo_all()
    sigma_tol = SIGMA_TOL_REL * math.sqrt(max(model.process_variance, 0.0))
    pi = pi_from_moments(mu, sigma, sigma_tol, floor)
    return float(np.mean(np.where(y <= 0.0, 1.0 / pi, 0.0)))
