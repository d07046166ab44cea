"""Uniform build/search contract shared by every index family.

Every search ends in the same exact-rerank path: candidate ids are rescored
with the shared distance kernel and the top k are selected with the global
(dissimilarity, id) tie-break. Reported scores are therefore never quantized
or approximate, and they are bit-identical to what the oracle reports for
the same pairs.

Built indexes serialize to a small versioned container (magic "VIDX") so
construction and query benchmarking can happen in separate processes. The
container stores the family tag, a sorted-key JSON params blob, and named
raw arrays; identical builds produce identical bytes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..core import BitMatrix, Measure, pairwise_dissimilarity, row_norms

VIDX_MAGIC = b"VIDX"
VIDX_VERSION = 1


@dataclass
class SearchResult:
    """Neighbors sorted ascending by (dissimilarity, id).

    ``n_candidates`` counts the corpus points the index scored for this
    query (exactly or via ADC) before the final rerank. A result may hold
    fewer than k neighbors only when the candidate set was smaller than k.
    """

    ids: np.ndarray  # (<= k,) int64
    dists: np.ndarray  # (<= k,) float32
    n_candidates: int


def corpus_size(corpus) -> int:
    return corpus.n if isinstance(corpus, BitMatrix) else corpus.shape[0]


def corpus_dim(corpus) -> int:
    return corpus.d if isinstance(corpus, BitMatrix) else corpus.shape[1]


class VectorIndex:
    """Base class: parameter validation, exact rerank, serialization."""

    family = "?"
    query_param_names: tuple = ()

    def __init__(self, corpus, measure: Measure, build_params: dict, build_seed: int):
        self.corpus = corpus
        self.measure = measure
        self.build_params = dict(build_params)
        self.build_seed = int(build_seed)
        self._corpus_norms = None
        if measure is Measure.COSINE and not isinstance(corpus, BitMatrix):
            self._corpus_norms = row_norms(corpus)

    # -- search ---------------------------------------------------------

    def search(self, query, k: int, query_params: dict = None) -> SearchResult:
        if k < 1:
            raise ValueError("k must be >= 1")
        qp = dict(query_params or {})
        unknown = set(qp) - set(self.query_param_names)
        if unknown:
            raise ValueError(
                f"unknown query params for {self.family}: {sorted(unknown)}"
            )
        for name, value in qp.items():
            if int(value) < 1:
                raise ValueError(f"query param {name} must be a positive integer")
        if isinstance(query, BitMatrix):
            raise ValueError("search expects a single query vector")
        qd = query.d if hasattr(query, "d") else np.asarray(query).shape[-1]
        if qd != corpus_dim(self.corpus):
            raise ValueError(
                f"query dimension {qd} does not match corpus {corpus_dim(self.corpus)}"
            )
        return self._search(query, k, qp)

    def _search(self, query, k, qp) -> SearchResult:
        raise NotImplementedError

    def _rerank(self, candidate_ids, query, k: int) -> SearchResult:
        """Exact-rescore unique candidate ids and keep the top k."""
        candidate_ids = np.asarray(candidate_ids, dtype=np.int64)
        n_cand = candidate_ids.size
        if n_cand == 0:
            return SearchResult(
                ids=np.empty(0, dtype=np.int64),
                dists=np.empty(0, dtype=np.float32),
                n_candidates=0,
            )
        if isinstance(self.corpus, BitMatrix):
            rows = self.corpus.take(candidate_ids)
            dists = pairwise_dissimilarity(rows, query, self.measure)
        else:
            rows = self.corpus[candidate_ids]
            norms = (
                None
                if self._corpus_norms is None
                else self._corpus_norms[candidate_ids]
            )
            dists = pairwise_dissimilarity(rows, query, self.measure, row_norms_=norms)
        order = np.lexsort((candidate_ids, dists))[: min(k, n_cand)]
        return SearchResult(
            ids=candidate_ids[order],
            dists=dists[order].astype(np.float32),
            n_candidates=n_cand,
        )

    # -- serialization ---------------------------------------------------

    def _state_arrays(self) -> dict:
        """Named arrays to persist; families override."""
        return {}

    def _extra_params(self) -> dict:
        return {}

    def save(self, path) -> None:
        params = {
            "family": self.family,
            "measure": self.measure.value,
            "build_params": self.build_params,
            "build_seed": self.build_seed,
            "n": corpus_size(self.corpus),
            "d": corpus_dim(self.corpus),
        }
        params.update(self._extra_params())
        write_container(path, self.family, params, self._state_arrays())

    @classmethod
    def _restore(cls, corpus, measure, params, arrays):
        raise NotImplementedError


def write_container(path, family: str, params: dict, arrays: dict) -> None:
    fam = family.encode()
    blob = json.dumps(params, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(VIDX_MAGIC)
        f.write(struct.pack("<I", VIDX_VERSION))
        f.write(struct.pack("<I", len(fam)))
        f.write(fam)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(arr)
            dt = arr.dtype.newbyteorder("<")
            raw = arr.astype(dt, copy=False).tobytes()
            name_b = name.encode()
            dt_b = dt.str.encode()
            f.write(struct.pack("<I", len(name_b)))
            f.write(name_b)
            f.write(struct.pack("<I", len(dt_b)))
            f.write(dt_b)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            f.write(struct.pack("<Q", len(raw)))
            f.write(raw)


def read_container(path):
    """Returns (family, params, arrays) from a VIDX file."""
    path = Path(path)
    blob = path.read_bytes()
    view = memoryview(blob)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise ValueError(f"{path}: truncated index container")
        out = view[pos : pos + n]
        pos += n
        return out

    if bytes(take(4)) != VIDX_MAGIC:
        raise ValueError(f"{path}: bad magic")
    (version,) = struct.unpack("<I", take(4))
    if version != VIDX_VERSION:
        raise ValueError(f"{path}: unsupported index version {version}")
    (fam_len,) = struct.unpack("<I", take(4))
    family = bytes(take(fam_len)).decode()
    (params_len,) = struct.unpack("<I", take(4))
    params = json.loads(bytes(take(params_len)).decode())
    (n_arrays,) = struct.unpack("<I", take(4))
    arrays = {}
    for _ in range(n_arrays):
        (name_len,) = struct.unpack("<I", take(4))
        name = bytes(take(name_len)).decode()
        (dt_len,) = struct.unpack("<I", take(4))
        dt = np.dtype(bytes(take(dt_len)).decode())
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}Q", take(8 * ndim))
        (nbytes,) = struct.unpack("<Q", take(8))
        arrays[name] = (
            np.frombuffer(take(nbytes), dtype=dt).reshape(shape).copy()
        )
    return family, params, arrays
