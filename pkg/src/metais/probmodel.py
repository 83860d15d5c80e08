"""Input uncertainty model: independent one-dimensional marginals.

The joint density is the product of the marginal densities.  The log-density
is the canonical evaluation path (sums of marginal log-densities stay finite
up to a hundred dimensions where the plain product would underflow); ``pdf``
is ``exp(log_pdf)``.
"""

import math

import numpy as np
from scipy import special

__all__ = ["Marginal", "ProbabilisticModel"]

_LOG_2PI = math.log(2.0 * math.pi)

MARGINAL_KINDS = ("normal", "lognormal", "uniform")


class Marginal:
    """One-dimensional distribution: ``normal``, ``lognormal`` or ``uniform``.

    Normal and lognormal are parameterized by the mean and standard deviation
    of the variate itself (``param_a``, ``param_b``); uniform by its bounds.
    For the lognormal the underlying Gaussian parameters are derived by moment
    matching and round-trip to the stored moments to better than 1e-12.
    """

    __slots__ = ("kind", "param_a", "param_b", "_gauss_mu", "_gauss_sigma")

    def __init__(self, kind, param_a, param_b):
        if kind not in MARGINAL_KINDS:
            raise ValueError(f"unknown marginal kind {kind!r}")
        param_a = float(param_a)
        param_b = float(param_b)
        if kind == "uniform":
            if not param_a < param_b:
                raise ValueError("uniform marginal requires lower < upper")
        elif not param_b > 0.0:
            raise ValueError(f"{kind} marginal requires a positive standard deviation")
        if kind == "lognormal" and param_a <= 0.0:
            raise ValueError("lognormal marginal requires a positive mean")
        self.kind = kind
        self.param_a = param_a
        self.param_b = param_b
        if kind == "lognormal":
            zeta2 = math.log1p((param_b / param_a) ** 2)
            self._gauss_sigma = math.sqrt(zeta2)
            self._gauss_mu = math.log(param_a) - 0.5 * zeta2
        else:
            self._gauss_mu = 0.0
            self._gauss_sigma = 0.0

    @classmethod
    def normal(cls, mean, sd):
        return cls("normal", mean, sd)

    @classmethod
    def lognormal(cls, mean, sd):
        return cls("lognormal", mean, sd)

    @classmethod
    def uniform(cls, low, high):
        return cls("uniform", low, high)

    def __repr__(self):
        return f"Marginal({self.kind!r}, {self.param_a!r}, {self.param_b!r})"

    def __eq__(self, other):
        return (
            isinstance(other, Marginal)
            and self.kind == other.kind
            and self.param_a == other.param_a
            and self.param_b == other.param_b
        )

    def mean(self):
        if self.kind == "uniform":
            return 0.5 * (self.param_a + self.param_b)
        return self.param_a

    def std(self):
        if self.kind == "uniform":
            return (self.param_b - self.param_a) / math.sqrt(12.0)
        return self.param_b

    def log_pdf(self, x):
        """Natural log of the density; -inf outside the support."""
        x = np.asarray(x, dtype=float)
        if self.kind == "normal":
            z = (x - self.param_a) / self.param_b
            return -0.5 * z * z - math.log(self.param_b) - 0.5 * _LOG_2PI
        if self.kind == "lognormal":
            out = np.full(x.shape, -np.inf)
            pos = x > 0.0
            if np.any(pos):
                lx = np.log(x[pos])
                z = (lx - self._gauss_mu) / self._gauss_sigma
                out[pos] = (
                    -0.5 * z * z - lx - math.log(self._gauss_sigma) - 0.5 * _LOG_2PI
                )
            return out
        inside = (x >= self.param_a) & (x <= self.param_b)
        return np.where(inside, -math.log(self.param_b - self.param_a), -np.inf)

    def pdf(self, x):
        return np.exp(self.log_pdf(x))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "normal":
            return special.ndtr((x - self.param_a) / self.param_b)
        if self.kind == "lognormal":
            out = np.zeros(x.shape)
            pos = x > 0.0
            if np.any(pos):
                out[pos] = special.ndtr(
                    (np.log(x[pos]) - self._gauss_mu) / self._gauss_sigma
                )
            return out
        return np.clip((x - self.param_a) / (self.param_b - self.param_a), 0.0, 1.0)

    def quantile(self, u):
        """Inverse CDF for u in the open unit interval."""
        u = np.asarray(u, dtype=float)
        if np.any(u <= 0.0) or np.any(u >= 1.0):
            raise ValueError("quantile argument must lie strictly inside (0, 1)")
        if self.kind == "normal":
            return self.param_a + self.param_b * special.ndtri(u)
        if self.kind == "lognormal":
            return np.exp(self._gauss_mu + self._gauss_sigma * special.ndtri(u))
        return self.param_a + u * (self.param_b - self.param_a)

    def sample(self, count, rng):
        if self.kind == "normal":
            return rng.normal(self.param_a, self.param_b, size=count)
        if self.kind == "lognormal":
            return rng.lognormal(self._gauss_mu, self._gauss_sigma, size=count)
        return rng.uniform(self.param_a, self.param_b, size=count)


class ProbabilisticModel:
    """Random input vector with independent marginals.

    Immutable after construction; sampling calls own their random stream, so
    instances are safe to share across threads.  Parameters are regrouped by
    marginal kind at construction so that density evaluation and sampling are
    single vectorized expressions regardless of the dimension.
    """

    def __init__(self, marginals):
        marginals = tuple(marginals)
        if not marginals:
            raise ValueError("at least one marginal is required")
        if not all(isinstance(m, Marginal) for m in marginals):
            raise TypeError("marginals must be Marginal instances")
        self.marginals = marginals
        self._blocks = {}
        for kind in MARGINAL_KINDS:
            idx = np.array([i for i, m in enumerate(marginals) if m.kind == kind],
                           dtype=int)
            if idx.size == 0:
                continue
            group = [marginals[i] for i in idx]
            if kind == "uniform":
                a = np.array([m.param_a for m in group])
                b = np.array([m.param_b for m in group])
                self._blocks[kind] = (idx, a, b, float(np.sum(np.log(b - a))))
            elif kind == "normal":
                a = np.array([m.param_a for m in group])
                b = np.array([m.param_b for m in group])
                const = float(np.sum(np.log(b)) + 0.5 * _LOG_2PI * idx.size)
                self._blocks[kind] = (idx, a, b, const)
            else:
                mu = np.array([m._gauss_mu for m in group])
                sg = np.array([m._gauss_sigma for m in group])
                const = float(np.sum(np.log(sg)) + 0.5 * _LOG_2PI * idx.size)
                self._blocks[kind] = (idx, mu, sg, const)

    @property
    def dim(self):
        return len(self.marginals)

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            if x.shape[0] != self.dim:
                raise ValueError(f"point has dimension {x.shape[0]}, expected {self.dim}")
            return x[None, :], True
        if x.ndim == 2:
            if x.shape[1] != self.dim:
                raise ValueError(f"points have dimension {x.shape[1]}, expected {self.dim}")
            return x, False
        raise ValueError("expected a point or a matrix of row points")

    def log_pdf(self, x):
        """Joint log-density of one point (n,) or of rows of an (N, n) array."""
        pts, single = self._check(x)
        total = np.zeros(pts.shape[0])
        block = self._blocks.get("normal")
        if block is not None:
            idx, mean, sd, const = block
            z = (pts[:, idx] - mean) / sd
            total -= 0.5 * np.einsum("ij,ij->i", z, z) + const
        block = self._blocks.get("lognormal")
        if block is not None:
            idx, mu, sg, const = block
            sub = pts[:, idx]
            ok = np.all(sub > 0.0, axis=1)
            contrib = np.full(pts.shape[0], -np.inf)
            if np.any(ok):
                lx = np.log(sub[ok])
                z = (lx - mu) / sg
                contrib[ok] = -0.5 * np.einsum("ij,ij->i", z, z) - lx.sum(axis=1) - const
            total += contrib
        block = self._blocks.get("uniform")
        if block is not None:
            idx, a, b, log_volume = block
            sub = pts[:, idx]
            ok = np.all((sub >= a) & (sub <= b), axis=1)
            total += np.where(ok, -log_volume, -np.inf)
        return float(total[0]) if single else total

    def pdf(self, x):
        out = np.exp(self.log_pdf(x))
        return float(out) if np.isscalar(out) or out.ndim == 0 else out

    def sample(self, count, rng):
        if count < 1:
            raise ValueError("count must be >= 1")
        out = np.empty((count, self.dim))
        block = self._blocks.get("normal")
        if block is not None:
            idx, mean, sd, _ = block
            out[:, idx] = rng.normal(mean, sd, size=(count, idx.size))
        block = self._blocks.get("lognormal")
        if block is not None:
            idx, mu, sg, _ = block
            out[:, idx] = rng.lognormal(mu, sg, size=(count, idx.size))
        block = self._blocks.get("uniform")
        if block is not None:
            idx, a, b, _ = block
            out[:, idx] = rng.uniform(a, b, size=(count, idx.size))
        return out

    def quantile_map(self, u):
        """Map an (N, n) array of probabilities through the marginal quantiles."""
        u = np.asarray(u, dtype=float)
        if u.ndim != 2 or u.shape[1] != self.dim:
            raise ValueError("expected an (N, n) array of probabilities")
        cols = [marg.quantile(u[:, k]) for k, marg in enumerate(self.marginals)]
        return np.column_stack(cols)

    def means(self):
        return np.array([m.mean() for m in self.marginals])

    def stds(self):
        return np.array([m.std() for m in self.marginals])
