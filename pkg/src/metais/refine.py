"""Adaptive enrichment of the surrogate toward the failure region.

Starting from a Latin-hypercube design mapped through the input quantiles, the
loop alternates: fit the surrogate by maximum likelihood, sample a large
population from the quasi-optimal instrumental density, reduce it to K
cluster centers, evaluate the true limit state there and extend the design.
It stops once the design is large enough and the leave-one-out correction
proxy sits inside the configured band, or when the size or evaluation budget
runs out.
"""

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .classify import ClassificationFunction, InstrumentalDensity, u_criterion_batch
from .cluster import reduce_population
from .estimate import loo_correction_factor
from .kriging import (DesignOfExperiments, SingularModelError, TrendBasis,
                      fit, fit_mle)
from .mcmc import SliceSamplerConfig, run_chain

__all__ = ["RefinementConfig", "IterationRecord", "RefinementError",
           "initial_doe", "refine_loop"]

log = logging.getLogger(__name__)

# Standardized distance below which an enrichment candidate counts as a
# duplicate of an existing design point.
_DUPLICATE_TOL = 1e-9


class RefinementError(RuntimeError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass
class RefinementConfig:
    k_per_iter: int
    max_g_evals: int
    population_size: int = 10_000
    m_min: int = 30
    m_max: int = 1000
    initial_doe_size: int | None = None
    loo_band: tuple = (0.5, 2.0)
    basis: TrendBasis = field(default_factory=TrendBasis)
    length_bounds: np.ndarray | None = None
    strategy: str = "hstar"  # or "ucrit": lowest |mu|/sigma over a prior sample
    # population sampling; lighter thinning than the estimator default since
    # the cluster reduction does not need decorrelated draws
    population_mcmc: SliceSamplerConfig | None = None

    def __post_init__(self):
        if self.k_per_iter < 1:
            raise ValueError("k_per_iter must be >= 1")
        if self.strategy not in ("hstar", "ucrit"):
            raise ValueError(f"unknown refinement strategy {self.strategy!r}")
        if self.m_max < self.m_min:
            raise ValueError("m_max must be >= m_min")


@dataclass
class IterationRecord:
    iteration: int
    doe_size: int
    lengths: list
    process_variance: float
    nugget: float
    alpha_loo: float
    n_seeds: int
    wall_time: float

    def to_dict(self):
        return {
            "iteration": self.iteration,
            "doe_size": self.doe_size,
            "lengths": self.lengths,
            "process_variance": self.process_variance,
            "nugget": self.nugget,
            "alpha_loo": self.alpha_loo,
            "n_seeds": self.n_seeds,
            "wall_time": self.wall_time,
        }


def initial_doe(model, m0, rng):
    """Latin-hypercube sample in probability space mapped through the marginal
    quantiles: one point per stratum in every one-dimensional projection."""
    if m0 < 1:
        raise ValueError("m0 must be >= 1")
    n = model.dim
    u = np.empty((m0, n))
    for k in range(n):
        u[:, k] = (rng.permutation(m0) + rng.uniform(size=m0)) / m0
    u = np.clip(u, 1e-4, 1.0 - 1e-4)
    return model.quantile_map(u)


def _repair_duplicates(centers, doe_points, population, scales):
    """Replace candidates that collide with the design by the population point
    farthest from the design and the already chosen candidates."""
    scaled_doe = doe_points / scales
    scaled_pop = population / scales
    chosen = []
    for center in centers:
        z = center / scales
        ref = np.vstack([scaled_doe] + [c / scales for c in chosen]) \
            if chosen else scaled_doe
        dist = np.sqrt(((ref - z) ** 2).sum(axis=1)).min()
        if dist >= _DUPLICATE_TOL:
            chosen.append(center)
            continue
        d2 = ((scaled_pop[:, None, :] - ref[None, :, :]) ** 2).sum(-1).min(axis=1)
        best = int(np.argmax(d2))
        chosen.append(population[best])
        log.info("refine duplicate center repaired with farthest population point")
    return np.asarray(chosen)


def _default_population_mcmc(scales):
    return SliceSamplerConfig(width=scales, max_stepout=32, burn_in=50,
                              thinning=2, chains=256)


def _enrichment_candidates(kriging_model, model, config, scales, rng):
    if config.strategy == "ucrit":
        sample = model.sample(config.population_size, rng)
        u = u_criterion_batch(kriging_model, sample)
        order = np.argsort(u, kind="stable")
        return sample[order[:config.k_per_iter]], 0
    hstar = InstrumentalDensity(ClassificationFunction(kriging_model), model)
    seeds = hstar.default_seeds(rng)
    mcmc_config = config.population_mcmc or _default_population_mcmc(scales)
    population = run_chain(hstar.log_hstar_batch, seeds, mcmc_config,
                           config.population_size, rng)
    centers, _ = reduce_population(population, config.k_per_iter, scales, rng)
    return _repair_duplicates(centers, kriging_model.doe.points, population,
                              scales), seeds.shape[0]


def refine_loop(g, model, config, rng, iteration_callback=None):
    """Run the enrichment loop; returns the final surrogate and the trace.

    ``g`` is called once per new design point (coordinates never repeat).  The
    optional ``iteration_callback(model, record)`` fires after every fit.
    """
    basis = config.basis
    p = basis.size(model.dim)
    k = config.k_per_iter
    m0 = config.initial_doe_size if config.initial_doe_size is not None else k
    m0 = max(m0, k, p + 2)
    if config.max_g_evals < m0 + k:
        raise ValueError("evaluation budget below initial design plus one iteration")
    scales = model.stds()

    points = initial_doe(model, m0, rng)
    doe = DesignOfExperiments(points, np.asarray(g(points)))
    used = m0
    km = fit_mle(doe, basis, bounds=config.length_bounds)
    trace = []
    iteration = 0
    t_iter = time.perf_counter()

    while True:
        alpha_loo = loo_correction_factor(km) if doe.size >= p + 2 else math.nan
        record = IterationRecord(
            iteration=iteration,
            doe_size=doe.size,
            lengths=[float(v) for v in km.lengths],
            process_variance=float(km.process_variance),
            nugget=float(km.nugget),
            alpha_loo=float(alpha_loo),
            n_seeds=int(np.count_nonzero(doe.observations <= 0.0)),
            wall_time=time.perf_counter() - t_iter,
        )
        trace.append(record)
        if iteration_callback is not None:
            iteration_callback(km, record)
        log.info("refine iter=%d m=%d alpha_loo=%.4g sigma2=%.4g nugget=%.1e wall=%.2fs",
                 iteration, doe.size, alpha_loo, km.process_variance, km.nugget,
                 record.wall_time)

        in_band = (not math.isnan(alpha_loo)
                   and config.loo_band[0] <= alpha_loo <= config.loo_band[1])
        if doe.size >= config.m_min and in_band:
            break
        if doe.size >= config.m_max:
            log.info("refine stopped at maximum design size %d", config.m_max)
            break
        remaining = config.max_g_evals - used
        if remaining <= 0:
            log.info("refine stopped on exhausted evaluation budget")
            break

        t_iter = time.perf_counter()
        k_new = min(k, remaining)
        candidates, _ = _enrichment_candidates(km, model, config, scales, rng)
        candidates = candidates[:k_new]
        observations = np.asarray(g(candidates))
        used += candidates.shape[0]
        doe = doe.extend(candidates, observations)
        iteration += 1
        try:
            km = fit_mle(doe, basis, bounds=config.length_bounds, start=km.lengths)
        except SingularModelError:
            try:
                km = fit(doe, basis, km.lengths)
            except SingularModelError as exc:
                raise RefinementError(f"surrogate fit failed at size {doe.size}: {exc}",
                                      trace) from exc

    return km, trace
