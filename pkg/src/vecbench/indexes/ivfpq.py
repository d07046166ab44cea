"""IVF-PQ: coarse k-means lists scored by product-quantized residuals.

Points are encoded as PQ codes of their residual against the coarse
centroid they belong to. At query time an ADC table is built per probed
list from the query residual; the top ``rerank_count`` ADC candidates are
rescored exactly and the top k of those are returned.
"""

from __future__ import annotations

import warnings

import numpy as np
from numba import njit

from ..core import BitMatrix, Measure, select_top
from ..quantization import pq_encode, pq_train
from .base import SearchResult, VectorIndex
from .ivf import _ListIndex


@njit(cache=True)
def _adc_scan_euclid(query, centroids, codebooks, codes, offsets, probes):
    """Squared-Euclidean ADC over the residual codes of the probed lists."""
    m, ksub, dsub = codebooks.shape
    total = 0
    for pi in range(probes.shape[0]):
        p = probes[pi]
        total += offsets[p + 1] - offsets[p]
    scores = np.empty(total, np.float32)
    positions = np.empty(total, np.int64)
    table = np.empty((m, ksub), np.float32)
    w = 0
    for pi in range(probes.shape[0]):
        p = probes[pi]
        for j in range(m):
            base = j * dsub
            for t in range(ksub):
                acc = np.float32(0.0)
                for u in range(dsub):
                    diff = (query[base + u] - centroids[p, base + u]) - codebooks[
                        j, t, u
                    ]
                    acc += diff * diff
                table[j, t] = acc
        for pos in range(offsets[p], offsets[p + 1]):
            s = np.float32(0.0)
            for j in range(m):
                s += table[j, codes[pos, j]]
            scores[w] = s
            positions[w] = pos
            w += 1
    return scores, positions


@njit(cache=True)
def _adc_scan_ip(query, centroids, codebooks, codes, offsets, probes):
    """Negative-inner-product ADC; the residual table is cluster-independent."""
    m, ksub, dsub = codebooks.shape
    table = np.empty((m, ksub), np.float32)
    for j in range(m):
        base = j * dsub
        for t in range(ksub):
            acc = np.float32(0.0)
            for u in range(dsub):
                acc += query[base + u] * codebooks[j, t, u]
            table[j, t] = -acc
    total = 0
    for pi in range(probes.shape[0]):
        p = probes[pi]
        total += offsets[p + 1] - offsets[p]
    scores = np.empty(total, np.float32)
    positions = np.empty(total, np.int64)
    w = 0
    d = query.shape[0]
    for pi in range(probes.shape[0]):
        p = probes[pi]
        const = np.float32(0.0)
        for u in range(d):
            const += query[u] * centroids[p, u]
        const = -const
        for pos in range(offsets[p], offsets[p + 1]):
            s = const
            for j in range(m):
                s += table[j, codes[pos, j]]
            scores[w] = s
            positions[w] = pos
            w += 1
    return scores, positions


class IVFPQIndex(_ListIndex):
    family = "IVFPQ"
    query_param_names = ("nprobe", "rerank_count")

    @classmethod
    def build(cls, corpus, measure: Measure, build_params: dict, seed: int):
        if isinstance(corpus, BitMatrix):
            raise ValueError("IVFPQ requires dense data")
        if measure not in (Measure.EUCLIDEAN, Measure.NEG_INNER_PRODUCT):
            raise ValueError(
                "IVFPQ supports Euclidean and negative inner product; "
                "pre-normalize cosine data and use one of those"
            )
        params = dict(build_params)
        c = int(params.pop("C"))
        m = int(params.pop("m"))
        b = int(params.pop("b", 8))
        if params:
            raise ValueError(f"unknown IVFPQ build params: {sorted(params)}")
        from ..clustering import kmeans

        dense = np.ascontiguousarray(corpus, dtype=np.float32)
        km = kmeans(dense, c, seed)
        index = cls(corpus, measure, {"C": c, "m": m, "b": b}, seed, km.centroids,
                    km.assignments)
        residuals = dense - km.centroids[km.assignments]
        index.codebook = pq_train(residuals, m, b, seed)
        codes_all = pq_encode(index.codebook, residuals)
        index.codes = np.ascontiguousarray(codes_all[index.member_ids])
        return index

    def _search(self, query, k, qp) -> SearchResult:
        if "nprobe" not in qp or "rerank_count" not in qp:
            raise ValueError("IVFPQ search requires nprobe and rerank_count")
        rerank_count = int(qp["rerank_count"])
        if rerank_count < k:
            warnings.warn(
                f"rerank_count {rerank_count} < k {k} caps recall", stacklevel=3
            )
        probes = self._probe_order(query, int(qp["nprobe"]))
        q32 = np.ascontiguousarray(query, dtype=np.float32)
        scan = (
            _adc_scan_euclid
            if self.measure is Measure.EUCLIDEAN
            else _adc_scan_ip
        )
        scores, positions = scan(
            q32,
            self.centroids,
            self.codebook.centroids,
            self.codes,
            self.list_offsets,
            probes,
        )
        scanned = scores.shape[0]
        cand_ids = self.member_ids[positions]
        shortlist = select_top(scores, rerank_count, ids=cand_ids)
        result = self._rerank(shortlist, query, k)
        return SearchResult(result.ids, result.dists, scanned)

    def _state_arrays(self) -> dict:
        arrays = super()._state_arrays()
        arrays["pq_centroids"] = self.codebook.centroids
        arrays["codes"] = self.codes
        return arrays

    @classmethod
    def _restore(cls, corpus, measure, params, arrays):
        from ..quantization import PQCodebook

        index = super()._restore(corpus, measure, params, arrays)
        bp = params["build_params"]
        pq_centroids = arrays["pq_centroids"].astype(np.float32)
        index.codebook = PQCodebook(
            m=int(bp["m"]), b=int(bp["b"]), centroids=pq_centroids, d=params["d"]
        )
        index.codes = np.ascontiguousarray(arrays["codes"], dtype=np.uint8)
        return index
