import numpy as np
import pytest

from metais.cluster import kmeans, reduce_population


def test_k_equals_n_points():
    pts = np.random.default_rng(0).normal(size=(6, 2))
    result = kmeans(pts, 6, np.random.default_rng(1))
    assert result.inertia == 0.0
    assert sorted(map(tuple, result.centers)) == sorted(map(tuple, pts))


def test_single_cluster_is_mean():
    pts = np.random.default_rng(2).normal(size=(40, 3))
    result = kmeans(pts, 1, np.random.default_rng(3))
    assert np.allclose(result.centers[0], pts.mean(axis=0), atol=1e-12)


def test_two_separated_blobs():
    rng = np.random.default_rng(4)
    a = rng.normal(loc=(-10.0, 0.0), scale=0.5, size=(150, 2))
    b = rng.normal(loc=(10.0, 5.0), scale=0.5, size=(150, 2))
    result = kmeans(np.vstack([a, b]), 2, np.random.default_rng(5))
    centers = sorted(map(tuple, result.centers))
    assert np.linalg.norm(np.array(centers[0]) - [-10.0, 0.0]) < 0.5
    assert np.linalg.norm(np.array(centers[1]) - [10.0, 5.0]) < 0.5


def test_too_few_points_raises():
    with pytest.raises(ValueError):
        kmeans(np.zeros((2, 1)) + [[0.0], [1.0]], 3, np.random.default_rng(0))


def test_centers_are_cluster_means():
    rng = np.random.default_rng(6)
    pts = rng.normal(size=(200, 2))
    result = kmeans(pts, 5, np.random.default_rng(7))
    for j in range(5):
        members = pts[result.assignments == j]
        assert members.shape[0] > 0
        assert np.allclose(result.centers[j], members.mean(axis=0), atol=1e-10)


def test_inertia_decreases_with_k():
    rng = np.random.default_rng(8)
    pts = rng.normal(size=(300, 2))
    inertias = [kmeans(pts, k, np.random.default_rng(9)).inertia for k in (2, 3, 4, 8)]
    assert all(b <= a + 1e-9 for a, b in zip(inertias, inertias[1:]))


def test_deterministic_given_seed():
    pts = np.random.default_rng(10).normal(size=(100, 2))
    a = kmeans(pts, 4, np.random.default_rng(11))
    b = kmeans(pts, 4, np.random.default_rng(11))
    assert np.array_equal(a.centers, b.centers)
    assert np.array_equal(a.assignments, b.assignments)


def test_permutation_equivariance():
    pts = np.random.default_rng(12).normal(size=(120, 3))
    perm = [2, 0, 1]
    a = kmeans(pts, 4, np.random.default_rng(13))
    b = kmeans(pts[:, perm], 4, np.random.default_rng(13))
    assert np.allclose(a.centers[:, perm], b.centers, atol=1e-12)
    assert np.array_equal(a.assignments, b.assignments)


def test_duplicated_points_still_produce_k_centers():
    pts = np.vstack([np.zeros((8, 2)), np.ones((2, 2))])
    result = kmeans(pts, 3, np.random.default_rng(14))
    assert result.centers.shape == (3, 2)
    assert result.assignments.shape == (10,)
    assert np.bincount(result.assignments, minlength=3).min() >= 1


def test_reduce_population_standardizes():
    rng = np.random.default_rng(15)
    # second coordinate lives on a 1000x larger scale
    raw = np.vstack([
        np.column_stack([rng.normal(-2, 0.1, 200), rng.normal(-2000, 100, 200)]),
        np.column_stack([rng.normal(2, 0.1, 200), rng.normal(2000, 100, 200)]),
    ])
    scales = np.array([1.0, 1000.0])
    centers, result = reduce_population(raw, 2, scales, np.random.default_rng(16))
    xs = sorted(centers[:, 0])
    assert xs[0] == pytest.approx(-2.0, abs=0.2)
    assert xs[1] == pytest.approx(2.0, abs=0.2)
    assert abs(centers[:, 1]).max() > 1000  # centers returned in original units
