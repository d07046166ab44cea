"""Reference vector indexes, one per algorithm family, behind one contract.

Families: BruteForce (exhaustive scan), IVF and QueryAwareIVF (clustering),
IVFPQ (clustering + product-quantized scoring), BeamGraph (navigable
graph), RPForest (randomized trees), LSH (hyperplane hashing).
"""

from __future__ import annotations

from ..clustering import Centroids, kmeans
from ..core import Measure
from .base import SearchResult, VectorIndex, read_container
from .bruteforce import BruteForceIndex
from .graph import BeamGraphIndex
from .ivf import IVFIndex, QueryAwareIVFIndex
from .ivfpq import IVFPQIndex
from .lsh import LSHIndex
from .rpforest import RPForestIndex

FAMILIES = {
    cls.family: cls
    for cls in (
        BruteForceIndex,
        IVFIndex,
        IVFPQIndex,
        BeamGraphIndex,
        RPForestIndex,
        LSHIndex,
        QueryAwareIVFIndex,
    )
}

__all__ = [
    "BeamGraphIndex",
    "BruteForceIndex",
    "Centroids",
    "FAMILIES",
    "IVFIndex",
    "IVFPQIndex",
    "LSHIndex",
    "QueryAwareIVFIndex",
    "RPForestIndex",
    "SearchResult",
    "VectorIndex",
    "build_index",
    "kmeans",
    "load_index",
]


def build_index(
    family: str,
    corpus,
    measure: Measure,
    build_params: dict = None,
    seed: int = 0,
    train_queries=None,
) -> VectorIndex:
    """Build an index of the named family over ``corpus``."""
    if family not in FAMILIES:
        raise ValueError(f"unknown index family: {family!r}")
    cls = FAMILIES[family]
    params = dict(build_params or {})
    if cls is QueryAwareIVFIndex:
        return cls.build(corpus, measure, params, seed, train_queries=train_queries)
    return cls.build(corpus, measure, params, seed)


def load_index(path, corpus) -> VectorIndex:
    """Load a serialized index and re-attach it to its corpus."""
    family, params, arrays = read_container(path)
    if family not in FAMILIES:
        raise ValueError(f"unknown index family in container: {family!r}")
    from .base import corpus_dim, corpus_size

    if corpus_size(corpus) != params["n"] or corpus_dim(corpus) != params["d"]:
        raise ValueError(
            f"corpus shape ({corpus_size(corpus)}, {corpus_dim(corpus)}) does not "
            f"match index ({params['n']}, {params['d']})"
        )
    measure = Measure.from_string(params["measure"])
    return FAMILIES[family]._restore(corpus, measure, params, arrays)
