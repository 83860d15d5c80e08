"""Built-in analytical limit states, call-counting wrappers and brute-force
reference estimates.

All limit states accept a single point ``(n,)`` or a matrix of row points
``(N, n)`` and are vectorized over rows.  Failure is ``g(x) <= 0``.
"""

import threading

import numpy as np

__all__ = ["parabola", "rackwitz", "linear", "InstrumentedLimitState",
           "make_limit_state", "oracle_pf"]


def _rows(x, expected_dim=None):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    if pts.ndim != 2:
        raise ValueError("expected a point or a matrix of row points")
    if expected_dim is not None and pts.shape[1] != expected_dim:
        raise ValueError(f"expected dimension {expected_dim}, got {pts.shape[1]}")
    if expected_dim is None and pts.shape[1] == 0:
        raise ValueError("zero-dimensional point")
    return pts, single


def parabola(x, b=5.0, kappa=0.5, e=0.1):
    """Two-dimensional parabolic margin: b - x2 - kappa*(x1 - e)^2."""
    pts, single = _rows(x, expected_dim=2)
    g = b - pts[:, 1] - kappa * (pts[:, 0] - e) ** 2
    return float(g[0]) if single else g


def rackwitz(x, a=3.0, sigma=0.2):
    """Sum-capacity margin (n + a*sigma*sqrt(n)) - sum(x)."""
    pts, single = _rows(x)
    n = pts.shape[1]
    g = (n + a * sigma * np.sqrt(n)) - pts.sum(axis=1)
    return float(g[0]) if single else g


def linear(x, beta0):
    """Hyperplane margin beta0 - x1; closed-form failure probability
    Phi(-beta0) when x1 is standard normal."""
    pts, single = _rows(x)
    g = beta0 - pts[:, 0]
    return float(g[0]) if single else g


class InstrumentedLimitState:
    """Wraps a limit state with an atomic call counter and an optional
    exact-coordinate cache.

    The counter increments once per distinct evaluated point; cached repeats
    return bitwise-identical values without a new underlying call.  Caching
    is keyed on the exact bit pattern of the coordinates and should be left
    off for million-sample Monte Carlo runs.
    """

    def __init__(self, fn, cache=True):
        self._fn = fn
        self._cache = {} if cache else None
        self._calls = 0
        self._lock = threading.Lock()

    @property
    def calls(self):
        return self._calls

    def __call__(self, x):
        pts, single = _rows(np.asarray(x, dtype=float))
        if self._cache is None:
            values = np.asarray(self._fn(pts), dtype=float).ravel()
            with self._lock:
                self._calls += pts.shape[0]
            return float(values[0]) if single else values

        keys = [row.tobytes() for row in pts]
        missing = [i for i, key in enumerate(keys) if key not in self._cache]
        if missing:
            fresh = np.asarray(self._fn(pts[missing]), dtype=float).ravel()
            with self._lock:
                for i, val in zip(missing, fresh):
                    if keys[i] not in self._cache:
                        self._cache[keys[i]] = float(val)
                        self._calls += 1
        values = np.array([self._cache[key] for key in keys])
        return float(values[0]) if single else values


def make_limit_state(kind, cache=True, **params):
    """Instrumented limit state by name: parabola, rackwitz, linear, external."""
    if kind == "parabola":
        def fn(x, p=params):
            return parabola(x, **p)
    elif kind == "rackwitz":
        def fn(x, p=params):
            return rackwitz(x, **p)
    elif kind == "linear":
        def fn(x, p=params):
            return linear(x, **p)
    elif kind == "external":
        from .cli import external_g  # deferred: cli depends on this module
        command = params["command"]
        timeout = params.get("timeout", 3600.0)

        def fn(x, command=command, timeout=timeout):
            return external_g(command, np.atleast_2d(x), timeout=timeout)
    else:
        raise ValueError(f"unknown limit state kind {kind!r}")
    return InstrumentedLimitState(fn, cache=cache)


def oracle_pf(g, model, n, rng, batch=100_000):
    """Brute-force crude Monte Carlo reference estimate with n samples."""
    if n < 10_000:
        raise ValueError("reference runs need at least 1e4 samples")
    from .estimate import crude_mc
    return crude_mc(g, model, target_cov=1e-12, n_max=n, batch=batch, rng=rng)
