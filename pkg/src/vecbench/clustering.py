"""Seeded k-means used as the coarse quantizer for clustering-based indexes.

k-means++ initialization followed by Lloyd iterations until the relative
inertia improvement drops below 1e-4 or 25 iterations, whichever comes
first. Empty clusters are repaired by splitting off the farthest member of
the largest cluster. Everything is driven by one seeded generator, so a
given (points, C, seed) triple always produces bit-identical centroids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_ITERATIONS = 25
REL_TOL = 1e-4

# Cap on temporary (block x C) distance matrices, in float32 elements.
_BLOCK_ELEMENTS = 1 << 24


@dataclass
class Centroids:
    """k-means output: centers plus the induced corpus partition."""

    centroids: np.ndarray  # (C, d) float32
    assignments: np.ndarray  # (n,) int32
    members: list  # per-cluster arrays of point ids, ascending
    inertia: float

    @property
    def c(self) -> int:
        return self.centroids.shape[0]


def assign_euclidean(points, centroids, sq_norms):
    """Nearest centroid per point (ties -> lowest cluster id) and the
    squared distance to it. Blocked so the temporary stays small."""
    n = points.shape[0]
    c = centroids.shape[0]
    assignments = np.empty(n, dtype=np.int32)
    min_d2 = np.empty(n, dtype=np.float32)
    sq_cent = np.einsum("ij,ij->i", centroids, centroids)
    block = max(1, _BLOCK_ELEMENTS // c)
    for s in range(0, n, block):
        e = min(n, s + block)
        d2 = sq_norms[s:e, None] - 2.0 * (points[s:e] @ centroids.T) + sq_cent[None, :]
        np.maximum(d2, 0.0, out=d2)
        a = np.argmin(d2, axis=1)
        assignments[s:e] = a
        min_d2[s:e] = d2[np.arange(e - s), a]
    return assignments, min_d2


def _plusplus_init(points, c, rng):
    n = points.shape[0]
    chosen = np.empty(c, dtype=np.int64)
    chosen[0] = rng.integers(n)
    diff = points - points[chosen[0]]
    min_d2 = np.einsum("ij,ij->i", diff, diff).astype(np.float64)
    for i in range(1, c):
        total = min_d2.sum()
        if total <= 0.0:
            # Remaining points duplicate chosen centroids; pick uniformly
            # among the unchosen ids instead.
            mask = np.ones(n, dtype=bool)
            mask[chosen[:i]] = False
            candidates = np.flatnonzero(mask)
            chosen[i] = candidates[rng.integers(candidates.size)]
        else:
            chosen[i] = rng.choice(n, p=min_d2 / total)
        diff = points - points[chosen[i]]
        d2 = np.einsum("ij,ij->i", diff, diff).astype(np.float64)
        np.minimum(min_d2, d2, out=min_d2)
    return points[chosen].copy()


def _repair_empty(points, centroids, assignments, min_d2):
    """Give every empty cluster the farthest member of the largest cluster."""
    c = centroids.shape[0]
    counts = np.bincount(assignments, minlength=c)
    for empty in np.flatnonzero(counts == 0):
        largest = int(np.argmax(counts))  # ties -> lowest cluster id
        member_ids = np.flatnonzero(assignments == largest)
        far = member_ids[int(np.argmax(min_d2[member_ids]))]
        centroids[empty] = points[far]
        assignments[far] = empty
        min_d2[far] = 0.0
        counts[largest] -= 1
        counts[empty] += 1


def _cluster_means(points, assignments, c):
    d = points.shape[1]
    sums = np.empty((c, d), dtype=np.float64)
    for j in range(d):
        sums[:, j] = np.bincount(assignments, weights=points[:, j], minlength=c)
    counts = np.bincount(assignments, minlength=c)
    return (sums / counts[:, None]).astype(np.float32)


def kmeans(points: np.ndarray, c: int, seed: int) -> Centroids:
    """Cluster ``points`` into ``c`` groups; deterministic given ``seed``."""
    points = np.ascontiguousarray(points, dtype=np.float32)
    n = points.shape[0]
    if c > n:
        raise ValueError(f"cannot fit {c} clusters to {n} points")
    if c < 1:
        raise ValueError("cluster count must be >= 1")
    rng = np.random.default_rng(seed)
    sq_norms = np.einsum("ij,ij->i", points, points)

    centroids = _plusplus_init(points, c, rng)
    prev_inertia = np.inf
    for _ in range(MAX_ITERATIONS):
        assignments, min_d2 = assign_euclidean(points, centroids, sq_norms)
        _repair_empty(points, centroids, assignments, min_d2)
        inertia = float(min_d2.sum(dtype=np.float64))
        centroids = _cluster_means(points, assignments, c)
        if prev_inertia - inertia < REL_TOL * max(prev_inertia, 1e-30):
            break
        prev_inertia = inertia

    assignments, min_d2 = assign_euclidean(points, centroids, sq_norms)
    _repair_empty(points, centroids, assignments, min_d2)
    inertia = float(min_d2.sum(dtype=np.float64))
    members = [np.flatnonzero(assignments == i).astype(np.int64) for i in range(c)]
    return Centroids(centroids, assignments, members, inertia)
