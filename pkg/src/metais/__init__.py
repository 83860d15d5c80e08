"""Rare-event failure probability estimation with adaptive kriging surrogates
and metamodel-based importance sampling."""

import os

# The hot loops issue huge numbers of small BLAS calls (triangular solves and
# GEMMs on matrices of a few hundred rows); multithreaded BLAS dispatch costs
# far more than it buys there.  Honor explicit user settings, otherwise pin
# BLAS pools to one thread.
if not any(v in os.environ for v in
           ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS")):
    try:
        from threadpoolctl import threadpool_limits as _threadpool_limits
        _blas_limit = _threadpool_limits(limits=1, user_api="blas")
    except ImportError:  # pragma: no cover - threadpoolctl is optional
        _blas_limit = None

from .bench import InstrumentedLimitState, linear, make_limit_state, oracle_pf, parabola, rackwitz
from .classify import ClassificationFunction, InstrumentalDensity, u_criterion
from .cluster import KMeansResult, kmeans, reduce_population
from .estimate import (Estimate, MetaISResult, augmented_pf, combine,
                       combined_cov_approx, correction_factor, crude_mc,
                       importance_sampling, loo_correction_factor)
from .kriging import (DesignOfExperiments, KrigingModel, SingularModelError,
                      TrendBasis, correlation, fit, fit_mle)
from .mcmc import ChainState, SliceSampler, SliceSamplerConfig, run_chain, slice_step
from .probmodel import Marginal, ProbabilisticModel
from .refine import RefinementConfig, RefinementError, initial_doe, refine_loop
from .cli import RunConfig, RunReport, external_g, run

__version__ = "0.1.0"
