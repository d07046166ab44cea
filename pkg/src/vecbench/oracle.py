"""Exact k-nearest-neighbor computation: the reference for every recall number.

Distances come from the shared kernel in :mod:`vecbench.core`, so the oracle,
the brute-force index, and every rerank stage report bit-identical scores for
the same (query, corpus row) pair. Ties are always broken by ascending corpus
id.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BitMatrix, Measure, pairwise_dissimilarity, row_norms, select_top


@dataclass
class GroundTruth:
    """True k-NN ids and distances per query, plus the k-th distance."""

    k: int
    ids: np.ndarray  # (q, k) int64
    dists: np.ndarray  # (q, k) float32, nondecreasing per row
    thresholds: np.ndarray  # (q,) float32, == dists[:, -1]

    @property
    def q(self) -> int:
        return self.ids.shape[0]


def _corpus_size(corpus) -> int:
    return corpus.n if isinstance(corpus, BitMatrix) else corpus.shape[0]


def exact_knn(corpus, query, k: int, measure: Measure, corpus_norms=None):
    """The k exact nearest neighbors of ``query``, sorted by (distance, id).

    Returns ``(ids, dists)`` arrays of length k. Requires 1 <= k <= corpus
    size.
    """
    m = _corpus_size(corpus)
    if not 1 <= k <= m:
        raise ValueError(f"k={k} out of range for corpus of size {m}")
    dists = pairwise_dissimilarity(corpus, query, measure, row_norms_=corpus_norms)
    ids = select_top(dists, k)
    return ids, dists[ids]


def ground_truth_for_queries(corpus, queries, k: int, measure: Measure) -> GroundTruth:
    """Exact k-NN of every query row against ``corpus``."""
    if isinstance(queries, BitMatrix):
        nq = queries.n
        rows = (queries.row(i) for i in range(nq))
    else:
        queries = np.asarray(queries, dtype=np.float32)
        nq = queries.shape[0]
        rows = iter(queries)
    norms = None
    if measure is Measure.COSINE:
        norms = row_norms(corpus)
    ids = np.empty((nq, k), dtype=np.int64)
    dists = np.empty((nq, k), dtype=np.float32)
    for i, q in enumerate(rows):
        ids[i], dists[i] = exact_knn(corpus, q, k, measure, corpus_norms=norms)
    return GroundTruth(k=k, ids=ids, dists=dists, thresholds=dists[:, -1].copy())


def build_ground_truth(dataset, k: int, out_dir=None):
    """Ground truth for a dataset's test (and, if present, train) queries.

    Returns ``(test_gt, train_gt_or_None)``. When ``out_dir`` is given the
    results are also written as ground-truth files next to the dataset.
    """
    test_gt = ground_truth_for_queries(
        dataset.corpus, dataset.test_queries, k, dataset.measure
    )
    train_gt = None
    if dataset.train_queries is not None:
        train_gt = ground_truth_for_queries(
            dataset.corpus, dataset.train_queries, k, dataset.measure
        )
    if out_dir is not None:
        from . import datasets  # local import; datasets depends on this module

        datasets.write_ground_truth(test_gt, datasets.gt_path(out_dir, k))
        if train_gt is not None:
            datasets.write_ground_truth(train_gt, datasets.train_gt_path(out_dir, k))
    return test_gt, train_gt
