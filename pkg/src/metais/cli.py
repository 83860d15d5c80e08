"""Batch front end.

Reads a JSON run configuration, executes the requested estimator and writes a
machine-readable JSON report.  The two-factor method runs three phases:
adaptive refinement of the surrogate, then the augmented probability and the
correction factor, each targeted at delta/sqrt(2) so their product meets the
requested coefficient of variation.  The two estimation phases own pre-split
random streams and may run concurrently without changing the result.

An external limit state is driven over a line protocol: the child process
reads one point per line (comma-separated decimal coordinates, UTF-8, "."
decimal separator) on standard input and writes one decimal value per line on
standard output, in order, one process per batch.
"""

import argparse
import concurrent.futures
import copy
import json
import logging
import math
import shlex
import subprocess
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from .bench import make_limit_state
from .classify import ClassificationFunction, InstrumentalDensity
from .estimate import (Estimate, MetaISResult, augmented_pf, combine,
                       combined_cov_approx, correction_factor, crude_mc,
                       importance_sampling)
from .kriging import TrendBasis
from .mcmc import SliceSamplerConfig
from .probmodel import Marginal, ProbabilisticModel
from .refine import RefinementConfig, refine_loop

__all__ = ["RunConfig", "RunReport", "ConfigError", "ProtocolError",
           "run", "external_g", "main"]

log = logging.getLogger(__name__)

MCMC_DEFAULTS = {"burn_in": 100, "thinning": 10, "chains": 64, "max_stepout": 32}
REFINE_DEFAULTS = {
    "population_size": 10_000,
    "m_min": 30,
    "m_max": 1000,
    "initial_doe_size": None,
    "loo_band": [0.5, 2.0],
    "strategy": "hstar",
    "trend": "constant",
    "population_burn_in": 50,
    "population_thinning": 2,
    "population_chains": 256,
}
BATCH_DEFAULTS = {"mc": 10_000, "augmented": 1000, "correction": 50}
PF_EPS_N_MAX_DEFAULT = 10_000_000


class ConfigError(ValueError):
    """Configuration problem, carrying the offending field in the message."""


class ProtocolError(RuntimeError):
    """External limit-state child violated the line protocol."""


def _require(mapping, key, kind, context):
    if key not in mapping:
        raise ConfigError(f"{context}.{key}: missing required field")
    value = mapping[key]
    if kind is float and isinstance(value, int):
        value = float(value)
    if not isinstance(value, kind):
        raise ConfigError(f"{context}.{key}: expected {kind.__name__}, got {type(value).__name__}")
    return value


@dataclass
class RunConfig:
    problem: dict
    marginals: list
    method: str
    target_cov: float
    n_max: int
    seed: int
    k_per_iter: int
    output: str | None = None
    parallel_phases: bool = False
    mcmc: dict = field(default_factory=lambda: dict(MCMC_DEFAULTS))
    refine: dict = field(default_factory=lambda: dict(REFINE_DEFAULTS))
    batches: dict = field(default_factory=lambda: dict(BATCH_DEFAULTS))
    instrumental: dict | None = None
    pf_eps_n_max: int = PF_EPS_N_MAX_DEFAULT

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise ConfigError("config: expected a JSON object")
        problem = _require(raw, "problem", dict, "config")
        if "kind" not in problem:
            raise ConfigError("config.problem.kind: missing required field")
        marginals_raw = _require(raw, "marginals", list, "config")
        marginals = []
        for i, spec in enumerate(marginals_raw):
            ctx = f"config.marginals[{i}]"
            if not isinstance(spec, dict):
                raise ConfigError(f"{ctx}: expected an object")
            kind = _require(spec, "kind", str, ctx)
            a = _require(spec, "param_a", float, ctx)
            b = _require(spec, "param_b", float, ctx)
            try:
                marginals.append(Marginal(kind, a, b))
            except ValueError as exc:
                raise ConfigError(f"{ctx}: {exc}") from exc
        method = _require(raw, "method", str, "config")
        if method not in ("mc", "is", "metais"):
            raise ConfigError(f"config.method: must be one of mc, is, metais, got {method!r}")
        target_cov = _require(raw, "target_cov", float, "config")
        if not 0.0 < target_cov < 1.0:
            raise ConfigError("config.target_cov: must lie in (0, 1)")
        n_max = _require(raw, "n_max", int, "config")
        if n_max < 1:
            raise ConfigError("config.n_max: must be >= 1")
        seed = _require(raw, "seed", int, "config")
        k_per_iter = raw.get("k_per_iter", len(marginals))
        if not isinstance(k_per_iter, int) or k_per_iter < 1:
            raise ConfigError("config.k_per_iter: must be a positive integer")
        mcmc = dict(MCMC_DEFAULTS)
        mcmc.update(raw.get("mcmc", {}))
        refine = dict(REFINE_DEFAULTS)
        refine.update(raw.get("refine", {}))
        if refine["trend"] not in ("constant", "linear"):
            raise ConfigError("config.refine.trend: must be constant or linear")
        batches = dict(BATCH_DEFAULTS)
        batches.update(raw.get("batches", {}))
        return cls(
            problem=dict(problem),
            marginals=marginals,
            method=method,
            target_cov=target_cov,
            n_max=n_max,
            seed=seed,
            k_per_iter=k_per_iter,
            output=raw.get("output"),
            parallel_phases=bool(raw.get("parallel_phases", False)),
            mcmc=mcmc,
            refine=refine,
            batches=batches,
            instrumental=raw.get("instrumental"),
            pf_eps_n_max=raw.get("pf_eps_n_max", PF_EPS_N_MAX_DEFAULT),
        )

    def to_dict(self):
        return {
            "problem": dict(self.problem),
            "marginals": [
                {"kind": m.kind, "param_a": m.param_a, "param_b": m.param_b}
                for m in self.marginals
            ],
            "method": self.method,
            "target_cov": self.target_cov,
            "n_max": self.n_max,
            "seed": self.seed,
            "k_per_iter": self.k_per_iter,
            "output": self.output,
            "parallel_phases": self.parallel_phases,
            "mcmc": dict(self.mcmc),
            "refine": dict(self.refine),
            "batches": dict(self.batches),
            "instrumental": copy.deepcopy(self.instrumental),
            "pf_eps_n_max": self.pf_eps_n_max,
        }


@dataclass
class RunReport:
    config: dict
    method: str
    result: dict
    g_calls: dict
    trace: list
    warnings: list
    timing: dict

    def to_dict(self):
        return {
            "config": self.config,
            "method": self.method,
            "result": self.result,
            "g_calls": self.g_calls,
            "trace": self.trace,
            "warnings": self.warnings,
            "timing": self.timing,
        }

    def body(self):
        """Report content without wall-clock fields; identical across runs
        with the same seed."""
        data = copy.deepcopy(self.to_dict())
        data.pop("timing")
        for row in data["trace"]:
            row.pop("wall_time", None)
        return data

    def to_json(self):
        return json.dumps(_jsonable(self.to_dict()), indent=2, sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj]
    return obj


def external_g(command, points, timeout=3600.0):
    """Evaluate a batch of points through the external line protocol."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] == 0:
        return np.empty(0)
    args = shlex.split(command) if isinstance(command, str) else list(command)
    payload = "".join(",".join(repr(float(c)) for c in row) + "\n" for row in points)
    try:
        proc = subprocess.run(args, input=payload, capture_output=True,
                              text=True, timeout=timeout)
    except subprocess.TimeoutExpired as exc:
        raise ProtocolError(f"external limit state timed out after {timeout} s") from exc
    except OSError as exc:
        raise ProtocolError(f"cannot launch external limit state {args[0]!r}: {exc}") from exc
    if proc.returncode != 0:
        raise ProtocolError(
            f"external limit state exited with status {proc.returncode}: "
            f"{proc.stderr.strip()[:500]}"
        )
    lines = proc.stdout.splitlines()
    values = []
    for i, line in enumerate(lines[:points.shape[0]], start=1):
        try:
            values.append(float(line.strip()))
        except ValueError as exc:
            raise ProtocolError(f"malformed value on output line {i}: {line.strip()!r}") from exc
    if len(values) != points.shape[0]:
        raise ProtocolError(
            f"expected {points.shape[0]} output lines, got {len(values)}"
        )
    return np.asarray(values)


def _build_limit_state(config):
    problem = dict(config.problem)
    kind = problem.pop("kind")
    cache = config.method == "metais"
    try:
        return make_limit_state(kind, cache=cache, **problem)
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"config.problem: {exc}") from exc


def _build_instrumental(config, model):
    spec = config.instrumental or {"kind": "prior"}
    kind = spec.get("kind")
    if kind == "prior":
        return model
    if kind == "gaussian":
        center = spec.get("center")
        scales = spec.get("scales")
        if center is None or scales is None:
            raise ConfigError("config.instrumental: gaussian kind needs center and scales")
        if len(center) != model.dim or len(scales) != model.dim:
            raise ConfigError("config.instrumental: center/scales length must match the input dimension")
        return ProbabilisticModel([Marginal.normal(c, s) for c, s in zip(center, scales)])
    raise ConfigError(f"config.instrumental.kind: unknown kind {kind!r}")


def _mcmc_config(config, widths):
    m = config.mcmc
    return SliceSamplerConfig(width=widths, max_stepout=m["max_stepout"],
                              burn_in=m["burn_in"], thinning=m["thinning"],
                              chains=m["chains"])


def _refinement_config(config, budget, widths):
    r = config.refine
    population_mcmc = SliceSamplerConfig(
        width=widths, max_stepout=config.mcmc["max_stepout"],
        burn_in=r["population_burn_in"], thinning=r["population_thinning"],
        chains=r["population_chains"])
    return RefinementConfig(
        k_per_iter=config.k_per_iter,
        max_g_evals=budget,
        population_size=r["population_size"],
        m_min=r["m_min"],
        m_max=r["m_max"],
        initial_doe_size=r["initial_doe_size"],
        loo_band=tuple(r["loo_band"]),
        basis=TrendBasis(r["trend"]),
        strategy=r["strategy"],
        population_mcmc=population_mcmc,
    )


def _run_metais(config, g, model, streams, timing, warnings):
    widths = model.stds()
    reserve = min(2000, max(100, config.n_max // 5))
    budget = config.n_max - reserve
    t0 = time.perf_counter()
    km, trace = refine_loop(g, model, _refinement_config(config, budget, widths),
                            np.random.default_rng(streams[0]))
    timing["refine_s"] = time.perf_counter() - t0
    doe_calls = g.calls
    cf = ClassificationFunction(km)
    hstar = InstrumentalDensity(cf, model)
    per_phase_target = config.target_cov / math.sqrt(2.0)
    corr_budget = config.n_max - doe_calls

    def eps_phase():
        return augmented_pf(cf, model, per_phase_target,
                            n_max=config.pf_eps_n_max,
                            batch=config.batches["augmented"],
                            rng=np.random.default_rng(streams[1]))

    def corr_phase():
        return correction_factor(g, cf, hstar, _mcmc_config(config, widths),
                                 per_phase_target, corr_budget,
                                 np.random.default_rng(streams[2]),
                                 batch=config.batches["correction"])

    t0 = time.perf_counter()
    if config.parallel_phases:
        with concurrent.futures.ThreadPoolExecutor(max_workers=2) as pool:
            eps_future = pool.submit(eps_phase)
            corr_future = pool.submit(corr_phase)
            pf_eps = eps_future.result()
            alpha = corr_future.result()
    else:
        pf_eps = eps_phase()
        alpha = corr_phase()
    timing["estimate_s"] = time.perf_counter() - t0

    if math.isfinite(pf_eps.cov) and math.isfinite(alpha.cov):
        pf = combine(pf_eps, alpha)
    else:
        warnings.append("degenerate phase estimate; product reported without a variance")
        pf = Estimate(pf_eps.value * alpha.value, 0.0,
                      pf_eps.n_samples + alpha.n_samples,
                      pf_eps.n_g_evals + alpha.n_g_evals,
                      pf_eps.flags + alpha.flags + ("degenerate_combination",))
    result = MetaISResult(pf_eps, alpha, pf, km.doe.size, len(trace) - 1)
    for est in (pf_eps, alpha):
        warnings.extend(est.flags)
    if pf_eps.cov > per_phase_target and pf_eps.n_samples >= config.pf_eps_n_max:
        warnings.append("augmented-probability sample budget exhausted before target")
    if alpha.cov > per_phase_target and alpha.n_g_evals >= corr_budget:
        warnings.append("evaluation budget exhausted before correction-factor target")
    payload = result.to_dict()
    payload["cov_approx"] = (combined_cov_approx(pf_eps.cov, alpha.cov)
                             if math.isfinite(pf_eps.cov) and math.isfinite(alpha.cov)
                             else "inf")
    g_calls = {"doe": doe_calls, "correction": alpha.n_g_evals,
               "augmented": 0, "total": g.calls}
    return payload, g_calls, [row.to_dict() for row in trace]


def run(config):
    """Execute one configured analysis and return the report."""
    model = ProbabilisticModel(config.marginals)
    if config.problem.get("kind") == "parabola" and model.dim != 2:
        raise ConfigError("config.problem: parabola requires exactly 2 marginals")
    g = _build_limit_state(config)
    streams = np.random.SeedSequence(config.seed).spawn(4)
    warnings = []
    timing = {}
    t_start = time.perf_counter()

    if config.method == "mc":
        est = crude_mc(g, model, config.target_cov, config.n_max,
                       batch=config.batches["mc"],
                       rng=np.random.default_rng(streams[3]))
        warnings.extend(est.flags)
        payload = {"pf": est.to_dict()}
        g_calls = {"total": g.calls, "mc": est.n_g_evals}
        trace = []
    elif config.method == "is":
        instrumental = _build_instrumental(config, model)
        est = importance_sampling(g, model, instrumental, config.n_max,
                                  np.random.default_rng(streams[3]))
        warnings.extend(est.flags)
        payload = {"pf": est.to_dict()}
        g_calls = {"total": g.calls, "is": est.n_g_evals}
        trace = []
    else:
        payload, g_calls, trace = _run_metais(config, g, model, streams,
                                              timing, warnings)

    timing["total_s"] = time.perf_counter() - t_start
    return RunReport(
        config=config.to_dict(),
        method=config.method,
        result=payload,
        g_calls=g_calls,
        trace=trace,
        warnings=warnings,
        timing=timing,
    )


def load_config(path):
    try:
        with open(path, encoding="utf-8") as handle:
            raw = json.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path!r}: invalid JSON at line {exc.lineno}, "
                          f"column {exc.colno}: {exc.msg}") from exc
    return RunConfig.from_dict(raw)


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="metais",
        description="Estimate rare failure probabilities with surrogate-based "
                    "importance sampling.")
    parser.add_argument("--config", required=True, help="path to the JSON run configuration")
    parser.add_argument("--seed", type=int, help="override config.seed")
    parser.add_argument("--method", choices=["mc", "is", "metais"], help="override config.method")
    parser.add_argument("--target-cov", type=float, help="override config.target_cov")
    parser.add_argument("--max-evals", type=int, help="override config.n_max")
    parser.add_argument("--k-per-iter", type=int, help="override config.k_per_iter")
    parser.add_argument("--out", help="override config.output (report path, '-' for stdout)")
    parser.add_argument("--parallel-phases", action="store_true",
                        help="run the two estimation phases concurrently")
    args = parser.parse_args(argv)

    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s %(message)s")
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config.seed = args.seed
        if args.method is not None:
            config.method = args.method
        if args.target_cov is not None:
            if not 0.0 < args.target_cov < 1.0:
                raise ConfigError("--target-cov: must lie in (0, 1)")
            config.target_cov = args.target_cov
        if args.max_evals is not None:
            config.n_max = args.max_evals
        if args.k_per_iter is not None:
            config.k_per_iter = args.k_per_iter
        if args.out is not None:
            config.output = args.out
        if args.parallel_phases:
            config.parallel_phases = True
        report = run(config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    text = report.to_json()
    if config.output in (None, "-"):
        print(text)
    else:
        with open(config.output, "w", encoding="utf-8") as handle:
            handle.write(text + "\n")
        log.info("report written to %s", config.output)
    return 0


if __name__ == "__main__":
    sys.exit(main())
