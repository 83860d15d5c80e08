"""Slice sampling for unnormalized log-densities.

Coordinate-wise slice sampling with stepping-out and shrinkage.  An ensemble
of chains is advanced in lockstep so that every target evaluation is a single
vectorized call on a matrix of points; statistically the chains are
independent (each move consumes its own uniforms).  Burn-in and thinning turn
the chains into an approximately independent sample of the target.
"""

from dataclasses import dataclass

import numpy as np

__all__ = ["SliceSamplerConfig", "ChainState", "WidenFailureError",
           "slice_step", "SliceSampler", "run_chain"]

_MAX_SHRINK = 10_000


class WidenFailureError(RuntimeError):
    """Stepping-out hit the expansion cap while still inside the slice
    (signals a pathologically small initial width)."""


@dataclass
class SliceSamplerConfig:
    """Tuning knobs; ``chains=None`` means min(4, number of seeds)."""

    width: float | np.ndarray = 1.0
    max_stepout: int = 32
    burn_in: int = 100
    thinning: int = 10
    chains: int | None = None

    def __post_init__(self):
        if self.max_stepout < 1:
            raise ValueError("max_stepout must be >= 1")
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")
        if self.chains is not None and self.chains < 1:
            raise ValueError("chains must be >= 1")
        if np.any(np.asarray(self.width, dtype=float) <= 0.0):
            raise ValueError("width must be positive")


class ChainState:
    """Ensemble of chain states: row i is the current point of chain i.

    The cached log-density always equals the target at the stored points.
    """

    def __init__(self, points, log_density, rng):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        log_density = np.asarray(log_density, dtype=float).ravel()
        if points.shape[0] != log_density.shape[0]:
            raise ValueError("points and cached log-densities disagree in length")
        self.points = points
        self.log_density = log_density
        self.rng = rng


def slice_step(state, target, width=1.0, max_stepout=32):
    """One full coordinate sweep of every chain; returns the new state.

    Per chain and coordinate: draw the slice level below the current density,
    place a width-sized interval around the point, step it out until both
    edges leave the slice (capped), then shrink on rejections until a point
    inside the slice is accepted.  Accepted points satisfy target >= level, so
    the update leaves the target distribution invariant.
    """
    if np.any(~np.isfinite(state.log_density)):
        raise ValueError("slice_step requires finite target values at the current points")
    x = state.points.copy()
    logp = state.log_density.copy()
    rng = state.rng
    n_chains, dim = x.shape
    width = np.broadcast_to(np.asarray(width, dtype=float), (dim,))

    for k in range(dim):
        log_u = logp + np.log(rng.uniform(size=n_chains))
        offset = rng.uniform(size=n_chains)
        left = x[:, k] - offset * width[k]
        right = left + width[k]

        for edge, step in ((left, -width[k]), (right, width[k])):
            growing = np.ones(n_chains, dtype=bool)
            expansions = 0
            while True:
                idx = np.flatnonzero(growing)
                pts = x[idx].copy()
                pts[:, k] = edge[idx]
                inside = target(pts) > log_u[idx]
                growing[idx[~inside]] = False
                if not growing.any():
                    break
                if expansions >= max_stepout:
                    raise WidenFailureError(
                        f"slice interval still growing after {max_stepout} "
                        f"expansions in coordinate {k}"
                    )
                edge[growing] += step
                expansions += 1

        pending = np.ones(n_chains, dtype=bool)
        shrinks = 0
        while pending.any():
            idx = np.flatnonzero(pending)
            prop = left[idx] + rng.uniform(size=idx.size) * (right[idx] - left[idx])
            pts = x[idx].copy()
            pts[:, k] = prop
            lp = target(pts)
            accept = lp >= log_u[idx]
            acc, rej = idx[accept], idx[~accept]
            x[acc, k] = prop[accept]
            logp[acc] = lp[accept]
            pending[acc] = False
            upper = prop[~accept] > x[rej, k]
            right[rej[upper]] = prop[~accept][upper]
            left[rej[~upper]] = prop[~accept][~upper]
            shrinks += 1
            if shrinks > _MAX_SHRINK:
                raise RuntimeError("slice shrinkage failed to terminate")

    return ChainState(x, logp, rng)


class SliceSampler:
    """Stateful sampler: burn once, then draw thinned samples incrementally."""

    def __init__(self, target, seeds, config, rng):
        seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
        if seeds.shape[0] == 0:
            raise ValueError("at least one seed is required")
        values = target(seeds)
        valid = np.isfinite(values)
        if not valid.any():
            raise ValueError("no seed has finite target density")
        seeds = seeds[valid]
        values = values[valid]
        n_chains = config.chains if config.chains is not None else min(4, seeds.shape[0])
        pick = np.arange(n_chains) % seeds.shape[0]
        self.target = target
        self.config = config
        self.state = ChainState(seeds[pick], values[pick], rng)
        self._burned = False
        self._buffer = []

    def _advance(self, sweeps):
        for _ in range(sweeps):
            self.state = slice_step(self.state, self.target,
                                    width=self.config.width,
                                    max_stepout=self.config.max_stepout)

    def draw(self, count):
        """Pooled sample of ``count`` points, round-robin across chains."""
        if count < 1:
            raise ValueError("count must be >= 1")
        if not self._burned:
            self._advance(self.config.burn_in)
            self._burned = True
        rows = list(self._buffer)
        have = sum(r.shape[0] for r in rows)
        while have < count:
            self._advance(self.config.thinning)
            rows.append(self.state.points.copy())
            have += self.state.points.shape[0]
        pooled = np.vstack(rows)
        self._buffer = [pooled[count:]] if have > count else []
        return pooled[:count]


def run_chain(target, seeds, config, count, rng):
    """Draw ``count`` points from the unnormalized log-density ``target``.

    Chains start from the seeds (cycled if there are fewer seeds than chains),
    discard the burn-in, keep every t-th sweep, and pool round-robin.
    Deterministic for a given rng.
    """
    return SliceSampler(target, seeds, config, rng).draw(count)
