"""Hyperplane locality-sensitive hashing for the cosine measure.

Each of the L tables keys corpus points by the sign pattern of h random
hyperplane projections. A query probes its own bucket in every table;
``probes`` > 1 additionally probes buckets reached by flipping the
lowest-confidence sign bits (smallest |projection| first), up to h extra
buckets per table. Candidates are the union over tables, rescored exactly.
"""

from __future__ import annotations

import numpy as np

from ..core import BitMatrix, Measure
from .base import SearchResult, VectorIndex

MAX_HASH_BITS = 62


def _keys_for(points: np.ndarray, planes: np.ndarray) -> np.ndarray:
    """Sign-pattern bucket key of every point for one table's hyperplanes."""
    h = planes.shape[0]
    if h == 0:
        return np.zeros(points.shape[0], dtype=np.uint64)
    bits = (points @ planes.T) > 0
    weights = np.left_shift(np.uint64(1), np.arange(h, dtype=np.uint64))
    return (bits.astype(np.uint64) * weights).sum(axis=1, dtype=np.uint64)


class LSHIndex(VectorIndex):
    family = "LSH"
    query_param_names = ("probes",)

    @classmethod
    def build(cls, corpus, measure: Measure, build_params: dict, seed: int):
        if isinstance(corpus, BitMatrix):
            raise ValueError("LSH requires dense data")
        if measure is not Measure.COSINE:
            raise ValueError("hyperplane LSH supports the cosine measure only")
        params = dict(build_params)
        tables = int(params.pop("L"))
        h = int(params.pop("h"))
        if params:
            raise ValueError(f"unknown LSH build params: {sorted(params)}")
        if tables < 1:
            raise ValueError("L must be >= 1")
        if not 0 <= h <= MAX_HASH_BITS:
            raise ValueError(f"h must be in [0, {MAX_HASH_BITS}]")
        dense = np.ascontiguousarray(corpus, dtype=np.float32)
        rng = np.random.default_rng(seed)
        planes = rng.standard_normal((tables, h, dense.shape[1])).astype(np.float32)
        index = cls(corpus, measure, {"L": tables, "h": h}, seed)
        index.planes = planes
        keys_sorted = np.empty((tables, dense.shape[0]), dtype=np.uint64)
        ids_sorted = np.empty((tables, dense.shape[0]), dtype=np.int64)
        for l in range(tables):
            keys = _keys_for(dense, planes[l])
            order = np.argsort(keys, kind="stable")
            keys_sorted[l] = keys[order]
            ids_sorted[l] = order
        index.keys_sorted = keys_sorted
        index.ids_sorted = ids_sorted
        return index

    def _probe_keys(self, proj: np.ndarray, key: np.uint64, probes: int) -> np.ndarray:
        h = proj.shape[0]
        n_keys = min(probes, h + 1)
        keys = np.empty(n_keys, dtype=np.uint64)
        keys[0] = key
        if n_keys > 1:
            flip_order = np.argsort(np.abs(proj), kind="stable")
            for i in range(n_keys - 1):
                keys[i + 1] = key ^ (np.uint64(1) << np.uint64(flip_order[i]))
        return keys

    def candidates(self, query, query_params: dict) -> np.ndarray:
        probes = int(query_params.get("probes", 1))
        q32 = np.ascontiguousarray(query, dtype=np.float32)
        parts = []
        for l in range(self.planes.shape[0]):
            if self.planes.shape[1] == 0:
                proj = np.empty(0, dtype=np.float32)
                key = np.uint64(0)
            else:
                proj = self.planes[l] @ q32
                weights = np.left_shift(
                    np.uint64(1), np.arange(proj.shape[0], dtype=np.uint64)
                )
                key = np.uint64(((proj > 0).astype(np.uint64) * weights).sum())
            row_keys = self.keys_sorted[l]
            for probe_key in self._probe_keys(proj, key, probes):
                lo = np.searchsorted(row_keys, probe_key, side="left")
                hi = np.searchsorted(row_keys, probe_key, side="right")
                if hi > lo:
                    parts.append(self.ids_sorted[l, lo:hi])
        if not parts:
            return np.empty(0, dtype=np.int64)
        return np.unique(np.concatenate(parts))

    def _search(self, query, k, qp) -> SearchResult:
        return self._rerank(self.candidates(query, qp), query, k)

    def _state_arrays(self) -> dict:
        return {
            "planes": self.planes,
            "keys_sorted": self.keys_sorted,
            "ids_sorted": self.ids_sorted,
        }

    @classmethod
    def _restore(cls, corpus, measure, params, arrays):
        index = cls(corpus, measure, params["build_params"], params["build_seed"])
        index.planes = arrays["planes"].astype(np.float32)
        index.keys_sorted = arrays["keys_sorted"].astype(np.uint64)
        index.ids_sorted = arrays["ids_sorted"].astype(np.int64)
        return index
