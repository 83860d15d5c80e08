"""K-means reduction of MCMC populations to representative points."""

from dataclasses import dataclass

import numpy as np

__all__ = ["KMeansResult", "kmeans", "reduce_population"]


@dataclass
class KMeansResult:
    centers: np.ndarray      # (k, n)
    assignments: np.ndarray  # (N,)
    inertia: float


def _sq_dist(points, centers):
    pp = np.einsum("ij,ij->i", points, points)
    cc = np.einsum("ij,ij->i", centers, centers)
    return np.maximum(pp[:, None] + cc[None, :] - 2.0 * points @ centers.T, 0.0)


def _seed_plusplus(points, k, rng):
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = _sq_dist(points, centers[:1])[:, 0]
    for j in range(1, k):
        total = d2.sum()
        if total > 0.0:
            probs = d2 / total
            idx = rng.choice(n, p=probs)
        else:
            idx = rng.integers(n)
        centers[j] = points[idx]
        d2 = np.minimum(d2, _sq_dist(points, centers[j:j + 1])[:, 0])
    return centers


def _lloyd(points, centers, max_iter, rng):
    k = centers.shape[0]
    assignments = None
    for _ in range(max_iter):
        d2 = _sq_dist(points, centers)
        new_assignments = np.argmin(d2, axis=1)
        # repair empty clusters at the point farthest from its assigned center
        counts = np.bincount(new_assignments, minlength=k)
        for empty in np.flatnonzero(counts == 0):
            far = np.argmax(d2[np.arange(points.shape[0]), new_assignments])
            new_assignments[far] = empty
            counts = np.bincount(new_assignments, minlength=k)
        if assignments is not None and np.array_equal(new_assignments, assignments):
            break
        assignments = new_assignments
        for j in range(k):
            centers[j] = points[assignments == j].mean(axis=0)
    d2 = _sq_dist(points, centers)
    inertia = float(d2[np.arange(points.shape[0]), assignments].sum())
    return KMeansResult(centers, assignments, inertia)


def kmeans(points, k, rng, max_iter=100, restarts=5):
    """Lloyd iteration with k-means++ seeding, best of ``restarts`` runs.

    Empty clusters are reseeded at the point farthest from its assigned
    center.  Deterministic for a given rng; ties between restarts keep the
    earlier run.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = points.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < k:
        raise ValueError(f"cannot form {k} clusters from {n} points")
    if k == n:
        return KMeansResult(points.copy(), np.arange(n), 0.0)
    best = None
    for _ in range(restarts):
        centers = _seed_plusplus(points, k, rng)
        result = _lloyd(points, centers, max_iter, rng)
        if best is None or result.inertia < best.inertia:
            best = result
    return best


def reduce_population(points, k, scales, rng, max_iter=100, restarts=5):
    """Cluster in coordinates standardized by the input marginal deviations,
    returning centers mapped back to the original coordinates."""
    scales = np.asarray(scales, dtype=float)
    result = kmeans(points / scales, k, rng, max_iter=max_iter, restarts=restarts)
    return result.centers * scales, result
