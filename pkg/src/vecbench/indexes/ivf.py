"""Inverted-file indexes: k-means partition, probe the closest lists.

``IVFIndex`` clusters the corpus itself. ``QueryAwareIVFIndex`` instead
clusters a training sample from the query distribution and assigns corpus
points to those query-derived centroids under the dataset measure, which
adapts the partition to out-of-distribution workloads.
"""

from __future__ import annotations

import numpy as np

from ..clustering import assign_euclidean, kmeans
from ..core import BitMatrix, Measure, pairwise_dissimilarity, select_top
from .base import SearchResult, VectorIndex

# Blocked corpus-to-centroid assignment; cap on temporary matrix elements.
_BLOCK_ELEMENTS = 1 << 24


def _centroid_ranking_measure(measure: Measure) -> Measure:
    # Cosine data is clustered and probed in Euclidean geometry: k-means
    # centroids are means, which may be arbitrarily short, so the cosine
    # formula against them is ill-conditioned. Euclidean ranking keeps the
    # probe order stable and matches the Euclidean k-means assignment.
    if measure is Measure.COSINE:
        return Measure.EUCLIDEAN
    return measure


def assign_by_measure(points: np.ndarray, centroids: np.ndarray, measure: Measure):
    """Nearest centroid per point under ``measure`` (ties -> lowest id)."""
    ranking = _centroid_ranking_measure(measure)
    if ranking is Measure.EUCLIDEAN:
        # Same code path k-means itself assigns with, so a query-aware index
        # trained on the corpus reproduces plain IVF's partition exactly.
        sq_norms = np.einsum("ij,ij->i", points, points)
        return assign_euclidean(points, centroids, sq_norms)[0]
    n = points.shape[0]
    out = np.empty(n, dtype=np.int32)
    block = max(1, _BLOCK_ELEMENTS // max(1, centroids.shape[0]))
    for s in range(0, n, block):
        e = min(n, s + block)
        out[s:e] = np.argmin(-(points[s:e] @ centroids.T), axis=1)
    return out


class _ListIndex(VectorIndex):
    """Shared member-list machinery for the two IVF variants."""

    query_param_names = ("nprobe",)

    def __init__(self, corpus, measure, build_params, seed, centroids, assignments):
        super().__init__(corpus, measure, build_params, seed)
        self.centroids = centroids
        order = np.lexsort((np.arange(assignments.size), assignments))
        self.member_ids = order.astype(np.int64)
        counts = np.bincount(assignments, minlength=centroids.shape[0])
        self.list_offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

    @property
    def c(self) -> int:
        return self.centroids.shape[0]

    def list_members(self, cluster: int) -> np.ndarray:
        s, e = self.list_offsets[cluster], self.list_offsets[cluster + 1]
        return self.member_ids[s:e]

    def _probe_order(self, query, nprobe: int) -> np.ndarray:
        ranking = _centroid_ranking_measure(self.measure)
        dists = pairwise_dissimilarity(self.centroids, query, ranking)
        return select_top(dists, min(nprobe, self.c))

    def candidates(self, query, query_params: dict) -> np.ndarray:
        """Ids the index would rescore for this query (ascending)."""
        probes = self._probe_order(query, int(query_params["nprobe"]))
        parts = [self.list_members(int(p)) for p in probes]
        return np.sort(np.concatenate(parts)) if parts else np.empty(0, np.int64)

    def _search(self, query, k, qp) -> SearchResult:
        if "nprobe" not in qp:
            raise ValueError(f"{self.family} search requires nprobe")
        probes = self._probe_order(query, int(qp["nprobe"]))
        parts = [self.list_members(int(p)) for p in probes]
        cand = np.concatenate(parts) if parts else np.empty(0, np.int64)
        return self._rerank(cand, query, k)

    def _state_arrays(self) -> dict:
        return {
            "centroids": self.centroids,
            "member_ids": self.member_ids,
            "list_offsets": self.list_offsets,
        }

    @classmethod
    def _restore(cls, corpus, measure, params, arrays):
        index = cls.__new__(cls)
        VectorIndex.__init__(
            index, corpus, measure, params["build_params"], params["build_seed"]
        )
        index.centroids = arrays["centroids"].astype(np.float32)
        index.member_ids = arrays["member_ids"].astype(np.int64)
        index.list_offsets = arrays["list_offsets"].astype(np.int64)
        return index


class IVFIndex(_ListIndex):
    family = "IVF"

    @classmethod
    def build(cls, corpus, measure: Measure, build_params: dict, seed: int):
        if isinstance(corpus, BitMatrix):
            raise ValueError("IVF requires dense data")
        params = dict(build_params)
        c = int(params.pop("C"))
        if params:
            raise ValueError(f"unknown IVF build params: {sorted(params)}")
        km = kmeans(np.asarray(corpus, dtype=np.float32), c, seed)
        return cls(corpus, measure, {"C": c}, seed, km.centroids, km.assignments)


class QueryAwareIVFIndex(_ListIndex):
    family = "QueryAwareIVF"

    @classmethod
    def build(
        cls,
        corpus,
        measure: Measure,
        build_params: dict,
        seed: int,
        train_queries=None,
    ):
        if isinstance(corpus, BitMatrix):
            raise ValueError("QueryAwareIVF requires dense data")
        if train_queries is None:
            raise ValueError("QueryAwareIVF requires train queries")
        params = dict(build_params)
        c = int(params.pop("C"))
        if params:
            raise ValueError(f"unknown QueryAwareIVF build params: {sorted(params)}")
        km = kmeans(np.asarray(train_queries, dtype=np.float32), c, seed)
        assignments = assign_by_measure(
            np.asarray(corpus, dtype=np.float32), km.centroids, measure
        )
        return cls(corpus, measure, {"C": c}, seed, km.centroids, assignments)
