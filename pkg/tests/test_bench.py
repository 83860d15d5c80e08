import math

import numpy as np
import pytest

from metais.bench import (InstrumentedLimitState, linear, make_limit_state,
                          oracle_pf, parabola, rackwitz)
from metais.probmodel import Marginal, ProbabilisticModel


def test_parabola_values():
    assert parabola(np.array([0.1, 5.0])) == pytest.approx(0.0, abs=1e-12)
    assert parabola(np.array([0.1, 0.0])) == pytest.approx(5.0, rel=1e-12)
    assert parabola(np.array([2.1, 3.0])) == pytest.approx(0.0, abs=1e-12)


def test_parabola_dimension_check():
    with pytest.raises(ValueError):
        parabola(np.array([1.0, 2.0, 3.0]))


def test_rackwitz_values():
    assert rackwitz(np.array([1.0 + 3 * 0.2])) == pytest.approx(0.0, abs=1e-12)
    assert rackwitz(np.ones(4)) == pytest.approx(1.2, rel=1e-12)
    assert rackwitz(np.zeros(2)) == pytest.approx(2 + 0.6 * math.sqrt(2), rel=1e-12)


def test_rackwitz_permutation_invariant():
    rng = np.random.default_rng(0)
    x = rng.uniform(0.5, 1.5, size=6)
    for _ in range(5):
        perm = rng.permutation(6)
        assert rackwitz(x[perm]) == pytest.approx(rackwitz(x), rel=1e-15)


def test_linear_values():
    assert linear(np.array([2.0]), beta0=2.0) == 0.0
    assert linear(np.array([0.0, 9.9]), beta0=2.0) == 2.0


def test_instrumented_cache_and_counter():
    calls = []

    def g(x):
        calls.append(x.shape[0])
        return x[:, 0]

    wrapped = InstrumentedLimitState(g, cache=True)
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    first = wrapped(x)
    again = wrapped(x)
    assert wrapped.calls == 2
    assert sum(calls) == 2
    assert np.array_equal(first, again)  # bitwise identical from the cache
    mixed = wrapped(np.array([[1.0, 2.0], [5.0, 6.0]]))
    assert wrapped.calls == 3
    assert mixed[0] == first[0]


def test_instrumented_without_cache_counts_everything():
    wrapped = InstrumentedLimitState(lambda x: x[:, 0], cache=False)
    x = np.ones((4, 1))
    wrapped(x)
    wrapped(x)
    assert wrapped.calls == 8


def test_instrumented_scalar_roundtrip():
    wrapped = InstrumentedLimitState(lambda x: x[:, 0] * 2, cache=True)
    assert wrapped(np.array([3.0])) == 6.0
    assert wrapped.calls == 1


def test_make_limit_state_kinds():
    g = make_limit_state("rackwitz", a=3.0, sigma=0.2)
    assert g(np.ones(4)) == pytest.approx(1.2, rel=1e-12)
    with pytest.raises(ValueError):
        make_limit_state("nonsense")


def test_oracle_requires_enough_samples():
    model = ProbabilisticModel([Marginal.normal(0.0, 1.0)])
    g = make_limit_state("linear", beta0=2.0, cache=False)
    with pytest.raises(ValueError):
        oracle_pf(g, model, 100, np.random.default_rng(0))


def test_oracle_linear_tail():
    model = ProbabilisticModel([Marginal.normal(0.0, 1.0)])
    g = make_limit_state("linear", beta0=2.0, cache=False)
    est = oracle_pf(g, model, 1_000_000, np.random.default_rng(1))
    exact = 0.5 * math.erfc(2.0 / math.sqrt(2.0))
    assert abs(est.value - exact) <= 3 * est.std_dev
    assert est.n_g_evals == 1_000_000


def test_parabola_failure_has_two_branches():
    model = ProbabilisticModel([Marginal.normal(0.0, 1.0)] * 2)
    pts = model.sample(400_000, np.random.default_rng(2))
    failing = pts[parabola(pts) <= 0.0]
    assert np.any(failing[:, 0] < 0.1)
    assert np.any(failing[:, 0] > 0.1)
