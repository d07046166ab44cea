"""Vector types and dissimilarity measures shared by every part of the harness.

All scores are 32-bit floats. Dense distance kernels go through a single
einsum-based code path so that the same (query, corpus row) pair always
produces the bit-identical score, no matter which index or oracle asked
for it. Binary vectors are stored as packed little-endian 64-bit words
(word 0 holds bits 0-63) with zeroed pad bits, so Hamming distance is a
plain XOR + popcount.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

WORD_BITS = 64

# Norms below this are treated as zero vectors (degenerate embeddings).
ZERO_NORM_EPS = 1e-12


class Measure(Enum):
    """Dissimilarity measure attached to a dataset or index."""

    EUCLIDEAN = "euclidean"
    COSINE = "cosine"
    NEG_INNER_PRODUCT = "neg_inner_product"
    HAMMING = "hamming"

    @classmethod
    def from_string(cls, name: str) -> "Measure":
        key = name.strip().lower().replace("-", "_")
        aliases = {
            "l2": cls.EUCLIDEAN,
            "ip": cls.NEG_INNER_PRODUCT,
            "neg_ip": cls.NEG_INNER_PRODUCT,
            "inner_product": cls.NEG_INNER_PRODUCT,
        }
        if key in aliases:
            return aliases[key]
        for m in cls:
            if m.value == key:
                return m
        raise ValueError(f"unknown measure: {name!r}")

    @property
    def is_binary(self) -> bool:
        return self is Measure.HAMMING


@dataclass(frozen=True, eq=False)
class BitMatrix:
    """n x d bit matrix packed into little-endian uint64 words.

    Bit j of row i lives at ``words[i, j // 64] >> (j % 64)``. Pad bits in
    the last word of each row must be zero; Hamming distances rely on it.
    """

    words: np.ndarray  # (n, w) uint64
    d: int

    def __post_init__(self):
        if self.words.ndim != 2 or self.words.dtype != np.uint64:
            raise ValueError("BitMatrix.words must be a 2-D uint64 array")
        expected_w = (self.d + WORD_BITS - 1) // WORD_BITS
        if self.words.shape[1] != expected_w:
            raise ValueError(
                f"BitMatrix width {self.words.shape[1]} does not match "
                f"d={self.d} (expected {expected_w} words)"
            )
        pad = expected_w * WORD_BITS - self.d
        if pad and self.words.shape[0]:
            mask = np.uint64((1 << (WORD_BITS - pad)) - 1)
            if np.any(self.words[:, -1] & ~mask):
                raise ValueError("BitMatrix pad bits must be zero")

    @property
    def n(self) -> int:
        return self.words.shape[0]

    def row(self, i: int) -> "BitVector":
        return BitVector(self.words[i], self.d)

    def take(self, ids) -> "BitMatrix":
        return BitMatrix(self.words[ids], self.d)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, BitMatrix)
            and self.d == other.d
            and np.array_equal(self.words, other.words)
        )


@dataclass(frozen=True)
class BitVector:
    """A single packed bit row; see :class:`BitMatrix` for the layout."""

    words: np.ndarray  # (w,) uint64
    d: int


def pack_bits(bits: np.ndarray) -> BitMatrix:
    """Pack a boolean/0-1 matrix of shape (n, d) into a BitMatrix."""
    bits = np.asarray(bits)
    if bits.ndim != 2:
        raise ValueError("pack_bits expects a 2-D array")
    n, d = bits.shape
    w = (d + WORD_BITS - 1) // WORD_BITS
    padded = np.zeros((n, w * WORD_BITS), dtype=np.uint8)
    padded[:, :d] = bits.astype(bool)
    packed = np.packbits(padded, axis=1, bitorder="little")
    words = packed.view("<u8").astype(np.uint64)
    return BitMatrix(words, d)


def unpack_bits(bm: BitMatrix) -> np.ndarray:
    """Inverse of :func:`pack_bits`; returns a uint8 0/1 matrix of shape (n, d)."""
    as_bytes = bm.words.astype("<u8").view(np.uint8).reshape(bm.n, -1)
    bits = np.unpackbits(as_bytes, axis=1, bitorder="little")
    return bits[:, : bm.d]


def row_norms(matrix: np.ndarray) -> np.ndarray:
    """L2 norm of every row, float32."""
    m = np.asarray(matrix, dtype=np.float32)
    return np.sqrt(np.einsum("ij,ij->i", m, m))


def normalize(v: np.ndarray) -> np.ndarray:
    """Scale a vector to unit L2 norm. Raises on (near-)zero vectors."""
    v = np.asarray(v, dtype=np.float32)
    norm = np.sqrt(np.float32(np.dot(v, v)))
    if norm < ZERO_NORM_EPS:
        raise ValueError("cannot normalize a zero vector")
    return v / norm


def normalize_rows(matrix: np.ndarray) -> np.ndarray:
    """Row-wise unit normalization; raises if any row is (near-)zero."""
    m = np.asarray(matrix, dtype=np.float32)
    norms = row_norms(m)
    if np.any(norms < ZERO_NORM_EPS):
        bad = int(np.flatnonzero(norms < ZERO_NORM_EPS)[0])
        raise ValueError(f"cannot normalize zero row {bad}")
    return m / norms[:, None]


def _check_dense(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")


def pairwise_dissimilarity(rows, query, measure: Measure, row_norms_=None):
    """Dissimilarity of one query against many rows; the shared score kernel.

    ``rows`` is an (n, d) float32 matrix (or BitMatrix under Hamming),
    ``query`` a (d,) vector (or BitVector). Returns float32 scores. The
    reduction path is fixed (einsum) so repeated evaluations of the same
    pair are bit-identical.
    """
    if measure is Measure.HAMMING:
        if not isinstance(rows, BitMatrix) or not isinstance(query, BitVector):
            raise ValueError("Hamming requires bit-packed data")
        if rows.d != query.d:
            raise ValueError(f"dimension mismatch: {rows.d} vs {query.d}")
        diff = np.bitwise_count(rows.words ^ query.words)
        return diff.sum(axis=1, dtype=np.int64).astype(np.float32)

    if isinstance(rows, (BitMatrix, BitVector)) or isinstance(query, (BitMatrix, BitVector)):
        raise ValueError("dense measure applied to bit-packed data")
    rows = np.asarray(rows, dtype=np.float32)
    query = np.asarray(query, dtype=np.float32)
    _check_dense(rows, query)
    if measure is Measure.EUCLIDEAN:
        diff = rows - query
        return np.sqrt(np.einsum("ij,ij->i", diff, diff))
    if measure is Measure.NEG_INNER_PRODUCT:
        return -np.einsum("ij,j->i", rows, query)
    if measure is Measure.COSINE:
        qn = np.sqrt(np.float32(np.dot(query, query)))
        if qn < ZERO_NORM_EPS:
            raise ValueError("zero vector under cosine")
        norms = row_norms(rows) if row_norms_ is None else row_norms_
        if np.any(norms < ZERO_NORM_EPS):
            raise ValueError("zero vector under cosine")
        dots = np.einsum("ij,j->i", rows, query)
        return np.float32(1.0) - dots / (norms * qn)
    raise ValueError(f"unsupported measure: {measure}")


def dissimilarity(a, b, measure: Measure) -> float:
    """Scalar dissimilarity between two vectors under ``measure``."""
    if measure is Measure.HAMMING:
        if not isinstance(a, BitVector) or not isinstance(b, BitVector):
            raise ValueError("Hamming requires bit-packed data")
        rows = BitMatrix(a.words[None, :], a.d)
        return float(pairwise_dissimilarity(rows, b, measure)[0])
    if isinstance(a, (BitMatrix, BitVector)) or isinstance(b, (BitMatrix, BitVector)):
        raise ValueError("dense measure applied to bit-packed data")
    a = np.asarray(a, dtype=np.float32)
    b = np.asarray(b, dtype=np.float32)
    if a.ndim != 1 or b.ndim != 1:
        raise ValueError("dissimilarity expects 1-D vectors")
    return float(pairwise_dissimilarity(a[None, :], b, measure)[0])


def select_top(scores: np.ndarray, k: int, ids: np.ndarray | None = None):
    """Indices/ids of the k smallest scores, ties broken by ascending id.

    With ``ids=None`` the position in ``scores`` is the id. Returns the
    selected ids ordered by (score, id) ascending; fewer than k only when
    ``scores`` is shorter than k.
    """
    n = scores.shape[0]
    kk = min(k, n)
    if kk == 0:
        return np.empty(0, dtype=np.int64)
    if ids is None:
        if kk < n:
            part = np.argpartition(scores, kk - 1)[:kk]
            cutoff = scores[part].max()
            below = np.flatnonzero(scores < cutoff)
            at = np.flatnonzero(scores == cutoff)
            chosen = np.concatenate([below, at[: kk - below.size]])
        else:
            chosen = np.arange(n)
        order = np.argsort(scores[chosen], kind="stable")
        return chosen[order].astype(np.int64)
    ids = np.asarray(ids)
    order = np.lexsort((ids, scores))[:kk]
    return ids[order].astype(np.int64)
