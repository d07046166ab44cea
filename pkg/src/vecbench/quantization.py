"""Binary, 8-bit scalar, and product quantization plus ADC scoring.

Product quantization trains one seeded k-means per subspace. Asymmetric
distance computation (ADC) builds a query-side lookup table of partial
squared-Euclidean (or partial negative-inner-product) contributions; the
score of a code row is the left-to-right sum of its table lookups. For
Euclidean the returned score is the square root of that sum so it is
directly comparable with exact distances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clustering import kmeans
from .core import BitMatrix, Measure, pack_bits


def binarize(matrix: np.ndarray, center: bool = False) -> BitMatrix:
    """Sign-threshold a dense matrix to packed bits.

    Bit j of row i is 1 iff the value (minus the per-dimension mean of this
    same matrix when ``center``) is strictly positive; exact zeros map to 0.
    """
    m = np.asarray(matrix, dtype=np.float32)
    if m.ndim != 2:
        raise ValueError("binarize expects a 2-D matrix")
    if center:
        m = m - m.mean(axis=0, dtype=np.float64).astype(np.float32)
    return pack_bits(m > 0)


@dataclass
class ScalarQuantizedMatrix:
    """Per-dimension affine 8-bit quantization of a dense matrix."""

    codes: np.ndarray  # (n, d) uint8
    scale: np.ndarray  # (d,) float32, > 0
    offset: np.ndarray  # (d,) float32

    def dequantize(self) -> np.ndarray:
        return (self.offset + self.scale * self.codes.astype(np.float32)).astype(
            np.float32
        )


def scalar_quantize(matrix: np.ndarray) -> ScalarQuantizedMatrix:
    """Map each dimension's [min, max] range affinely onto codes 0..255.

    Constant dimensions get scale 1 and code 0, so the offset alone
    reconstructs them exactly.
    """
    m = np.asarray(matrix, dtype=np.float32)
    if m.ndim != 2 or m.shape[0] < 2:
        raise ValueError("scalar_quantize expects a 2-D matrix with n >= 2")
    lo = m.min(axis=0)
    hi = m.max(axis=0)
    span = hi - lo
    scale = np.where(span > 0, span / np.float32(255.0), np.float32(1.0)).astype(
        np.float32
    )
    offset = lo.astype(np.float32)
    codes = np.clip(np.round((m - offset) / scale), 0, 255).astype(np.uint8)
    return ScalarQuantizedMatrix(codes, scale, offset)


@dataclass
class PQCodebook:
    """Per-subspace centroid tables for product quantization."""

    m: int
    b: int
    centroids: np.ndarray  # (m, 2**b, d // m) float32
    d: int

    @property
    def dsub(self) -> int:
        return self.d // self.m


def pq_train(matrix: np.ndarray, m: int, b: int, seed: int) -> PQCodebook:
    """Train m subspace codebooks of 2**b centroids each via seeded k-means."""
    x = np.ascontiguousarray(matrix, dtype=np.float32)
    n, d = x.shape
    if d % m != 0:
        raise ValueError(f"subspace count {m} does not divide dimension {d}")
    if not 1 <= b <= 8:
        raise ValueError("bits per code must be in [1, 8]")
    ksub = 1 << b
    if n < ksub:
        raise ValueError(f"need at least {ksub} points to train {ksub} centroids")
    dsub = d // m
    sub_seeds = np.random.SeedSequence(seed).generate_state(m)
    centroids = np.empty((m, ksub, dsub), dtype=np.float32)
    for j in range(m):
        sub = x[:, j * dsub : (j + 1) * dsub]
        centroids[j] = kmeans(sub, ksub, int(sub_seeds[j])).centroids
    return PQCodebook(m=m, b=b, centroids=centroids, d=d)


def pq_encode(codebook: PQCodebook, matrix: np.ndarray) -> np.ndarray:
    """Per-subspace nearest-centroid codes (ties -> lowest centroid index)."""
    x = np.atleast_2d(np.asarray(matrix, dtype=np.float32))
    if x.shape[1] != codebook.d:
        raise ValueError(f"dimension mismatch: {x.shape[1]} vs {codebook.d}")
    n = x.shape[0]
    codes = np.empty((n, codebook.m), dtype=np.uint8)
    dsub = codebook.dsub
    for j in range(codebook.m):
        sub = x[:, j * dsub : (j + 1) * dsub]
        cent = codebook.centroids[j]
        d2 = (
            np.einsum("ij,ij->i", sub, sub)[:, None]
            - 2.0 * (sub @ cent.T)
            + np.einsum("ij,ij->i", cent, cent)[None, :]
        )
        codes[:, j] = np.argmin(d2, axis=1)
    return codes


def pq_reconstruct(codebook: PQCodebook, codes: np.ndarray) -> np.ndarray:
    """Concatenate the centroids selected by each code row."""
    codes = np.atleast_2d(codes)
    parts = [codebook.centroids[j, codes[:, j]] for j in range(codebook.m)]
    return np.concatenate(parts, axis=1)


@dataclass
class ADCTable:
    """Query-side lookup table of per-subspace score contributions."""

    table: np.ndarray  # (m, 2**b) float32
    measure: Measure


def adc_table(codebook: PQCodebook, query: np.ndarray, measure: Measure) -> ADCTable:
    """Partial contributions of ``query`` against every centroid."""
    if measure not in (Measure.EUCLIDEAN, Measure.NEG_INNER_PRODUCT):
        raise ValueError(
            "ADC supports Euclidean and negative inner product only; "
            "pre-normalize cosine data and route it as one of those"
        )
    q = np.asarray(query, dtype=np.float32)
    if q.shape != (codebook.d,):
        raise ValueError(f"query must have shape ({codebook.d},)")
    dsub = codebook.dsub
    table = np.empty((codebook.m, 1 << codebook.b), dtype=np.float32)
    for j in range(codebook.m):
        sub = q[j * dsub : (j + 1) * dsub]
        cent = codebook.centroids[j]
        if measure is Measure.EUCLIDEAN:
            diff = cent - sub
            table[j] = np.einsum("ij,ij->i", diff, diff)
        else:
            table[j] = -(cent @ sub)
    return ADCTable(table=table, measure=measure)


def adc_accumulate(table: ADCTable, codes: np.ndarray) -> np.ndarray:
    """Left-to-right sum of table lookups per code row (raw accumulator)."""
    codes = np.atleast_2d(codes)
    acc = table.table[0, codes[:, 0]].copy()
    for j in range(1, codes.shape[1]):
        acc += table.table[j, codes[:, j]]
    return acc


def adc_scores(table: ADCTable, codes: np.ndarray) -> np.ndarray:
    """ADC scores comparable with exact dissimilarities of the same measure."""
    acc = adc_accumulate(table, codes)
    if table.measure is Measure.EUCLIDEAN:
        return np.sqrt(np.maximum(acc, 0.0, out=acc))
    return acc
