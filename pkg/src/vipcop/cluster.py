"""Lloyd's k-means with k-means++ seeding and unique-representative picks."""

from __future__ import annotations

import numpy as np


def _pairwise_sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d2 = (
        (a * a).sum(axis=1)[:, None]
        + (b * b).sum(axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    return np.clip(d2, 0.0, None)


def _plus_plus_seeds(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    first = rng.integers(0, n)
    centers[0] = points[first]
    closest = _pairwise_sq_dists(points, centers[:1])[:, 0]
    for j in range(1, k):
        total = closest.sum()
        if total <= 0:
            pick = rng.integers(0, n)
        else:
            pick = rng.choice(n, p=closest / total)
        centers[j] = points[pick]
        closest = np.minimum(closest, _pairwise_sq_dists(points, centers[j : j + 1])[:, 0])
    return centers


def kmeans(
    points: np.ndarray,
    k: int,
    rng: np.random.Generator,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Cluster ``points`` into ``k`` groups.

    Returns (centroids, labels, inertia). Empty clusters are reseeded with
    the point farthest from its assigned centroid, keeping exactly k
    non-empty clusters.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must lie in [1, {n}]")
    centers = _plus_plus_seeds(points, k, rng)
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        d2 = _pairwise_sq_dists(points, centers)
        labels = np.argmin(d2, axis=1)
        new_centers = centers.copy()
        assigned = d2[np.arange(n), labels]
        for j in range(k):
            members = labels == j
            if members.any():
                new_centers[j] = points[members].mean(axis=0)
            else:
                farthest = int(np.argmax(assigned))
                new_centers[j] = points[farthest]
                assigned[farthest] = 0.0
        shift = float(np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max())
        centers = new_centers
        if shift < tol:
            break
    d2 = _pairwise_sq_dists(points, centers)
    labels = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(n), labels].sum())
    return centers, labels, inertia


def nearest_unique_representatives(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Per centroid (in order), the nearest point not picked yet."""
    d2 = _pairwise_sq_dists(np.asarray(points, dtype=np.float64), centers)
    taken = np.zeros(points.shape[0], dtype=bool)
    picks = np.empty(centers.shape[0], dtype=np.int64)
    for j in range(centers.shape[0]):
        dist = np.where(taken, np.inf, d2[:, j])
        pick = int(np.argmin(dist))
        picks[j] = pick
        taken[pick] = True
    return picks
