import numpy as np
import pytest

from vecbench import Measure, generate_id_gaussian
from vecbench.oracle import ground_truth_for_queries


@pytest.fixture(scope="session")
def small_dataset():
    """Shared 4000x16 normalized Euclidean dataset for index-level tests."""
    return generate_id_gaussian(
        n=4000, d=16, clusters=8, spread=1.0, separation=4.0, seed=42, normalized=True
    )


@pytest.fixture(scope="session")
def small_gt(small_dataset):
    return ground_truth_for_queries(
        small_dataset.corpus, small_dataset.test_queries, 10, small_dataset.measure
    )


def loop_and_sort_knn(corpus, query, k, measure):
    """Independent oracle: per-pair python arithmetic, then sort by (dist, id).

    Deliberately avoids the library's vectorized kernels.
    """
    from vecbench.core import BitMatrix, unpack_bits

    scored = []
    if measure is Measure.HAMMING:
        rows = unpack_bits(corpus)
        qbits = unpack_bits(BitMatrix(query.words[None, :], query.d))[0]
        for i in range(rows.shape[0]):
            dist = float(sum(1 for a, b in zip(rows[i], qbits) if a != b))
            scored.append((dist, i))
    else:
        corpus = np.asarray(corpus, dtype=np.float32)
        query = np.asarray(query, dtype=np.float32)
        for i in range(corpus.shape[0]):
            row = corpus[i]
            if measure is Measure.EUCLIDEAN:
                acc = np.float32(0.0)
                for j in range(row.shape[0]):
                    diff = np.float32(row[j] - query[j])
                    acc = np.float32(acc + diff * diff)
                dist = float(np.sqrt(acc))
            elif measure is Measure.NEG_INNER_PRODUCT:
                acc = np.float32(0.0)
                for j in range(row.shape[0]):
                    acc = np.float32(acc + np.float32(row[j] * query[j]))
                dist = -float(acc)
            else:  # cosine
                dot = np.float32(0.0)
                nr = np.float32(0.0)
                nq = np.float32(0.0)
                for j in range(row.shape[0]):
                    dot = np.float32(dot + np.float32(row[j] * query[j]))
                    nr = np.float32(nr + np.float32(row[j] * row[j]))
                    nq = np.float32(nq + np.float32(query[j] * query[j]))
                dist = float(1.0 - dot / (np.sqrt(nr) * np.sqrt(nq)))
            scored.append((dist, i))
    scored.sort(key=lambda pair: (pair[0], pair[1]))
    ids = np.array([i for _, i in scored[:k]], dtype=np.int64)
    dists = np.array([s for s, _ in scored[:k]], dtype=np.float32)
    return ids, dists
