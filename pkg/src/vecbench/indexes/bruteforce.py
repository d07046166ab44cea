"""Exhaustive scan baseline; definitionally identical to the oracle."""

from __future__ import annotations

import numpy as np

from ..core import Measure, pairwise_dissimilarity, select_top
from .base import SearchResult, VectorIndex, corpus_size


class BruteForceIndex(VectorIndex):
    family = "BruteForce"
    query_param_names = ()

    @classmethod
    def build(cls, corpus, measure: Measure, build_params: dict, seed: int):
        if build_params:
            raise ValueError(f"BruteForce takes no build params: {build_params}")
        return cls(corpus, measure, {}, seed)

    def _search(self, query, k, qp) -> SearchResult:
        n = corpus_size(self.corpus)
        dists = pairwise_dissimilarity(
            self.corpus, query, self.measure, row_norms_=self._corpus_norms
        )
        ids = select_top(dists, min(k, n))
        return SearchResult(
            ids=ids, dists=dists[ids].astype(np.float32), n_candidates=n
        )

    @classmethod
    def _restore(cls, corpus, measure, params, arrays):
        return cls(corpus, measure, params["build_params"], params["build_seed"])
