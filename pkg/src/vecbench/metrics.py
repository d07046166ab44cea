"""Effectiveness, difficulty, and distribution diagnostics.

Recall counts a returned neighbor as correct when its exact dissimilarity is
within 1e-6 of the ground-truth k-th distance, so neighbors tied at the
threshold count even if the stored ground-truth ids happened to keep a
different member of the tie. Relative contrast (mean corpus distance over
k-th neighbor distance) is the per-query difficulty score; low values are
hard queries. Under negative inner product the contrast is computed on
L2-normalized copies with the cosine distance, recorded via
``measure_used``, because raw inner-product ratios can be negative.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .core import (
    BitMatrix,
    Measure,
    normalize_rows,
    pairwise_dissimilarity,
    row_norms,
    select_top,
)

RECALL_EPS = 1e-6
MAHALANOBIS_MAX_FIT_ROWS = 100_000


def recall(result_ids, result_dists, threshold: float, k: int) -> float:
    """Fraction of the true k nearest neighbors present in a search result.

    ``result_dists`` must be exact dissimilarities (the search contract).
    Lists shorter than k are penalized: missing slots count as misses.
    """
    dists = np.asarray(result_dists, dtype=np.float32)
    hits = int((dists <= np.float32(threshold) + np.float32(RECALL_EPS)).sum())
    return min(hits, k) / k


def qps(latencies) -> float:
    """Queries per second from per-query latencies in seconds."""
    lat = np.asarray(latencies, dtype=np.float64)
    if lat.size == 0:
        raise ValueError("qps of an empty latency list is undefined")
    return lat.size / float(lat.sum())


@dataclass
class ContrastProfile:
    """Per-query relative contrast; NaN flags queries where it is undefined."""

    rc: np.ndarray  # (q,) float64, NaN where undefined
    k: int
    measure_used: Measure

    @property
    def defined(self) -> np.ndarray:
        return ~np.isnan(self.rc)


def _contrast_one(corpus, query, k, measure, norms=None) -> float:
    dists = pairwise_dissimilarity(corpus, query, measure, row_norms_=norms)
    mean = float(dists.mean(dtype=np.float64))
    kth = float(dists[select_top(dists, k)[-1]])
    if kth <= 0.0 or mean <= 0.0:
        return float("nan")
    return mean / kth


def _substitute(corpus, queries, measure):
    """Normalize + cosine stands in for inner product (ratios stay positive)."""
    if measure is Measure.NEG_INNER_PRODUCT:
        return (
            normalize_rows(corpus),
            normalize_rows(np.atleast_2d(queries)),
            Measure.COSINE,
        )
    return corpus, queries, measure


def relative_contrast(corpus, query, k: int, measure: Measure) -> float:
    """Mean corpus distance divided by the k-th neighbor distance.

    Returns NaN when the ratio is undefined (non-positive numerator or
    denominator), e.g. when the query duplicates a corpus point at k=1.
    """
    if measure is Measure.HAMMING:
        return _contrast_one(corpus, query, k, measure)
    query = np.atleast_2d(np.asarray(query, dtype=np.float32))
    corpus, query, used = _substitute(corpus, query, measure)
    return _contrast_one(corpus, np.asarray(query)[0], k, used)


def contrast_profile(corpus, queries, k: int, measure: Measure) -> ContrastProfile:
    """Relative contrast of every query row; undefined queries get NaN."""
    if measure is Measure.HAMMING:
        if not isinstance(queries, BitMatrix):
            raise ValueError("Hamming contrast requires bit-packed queries")
        rc = np.array(
            [_contrast_one(corpus, queries.row(i), k, measure) for i in range(queries.n)]
        )
        return ContrastProfile(rc=rc, k=k, measure_used=measure)
    corpus, queries, used = _substitute(corpus, queries, measure)
    norms = row_norms(corpus) if used is Measure.COSINE else None
    rc = np.array([_contrast_one(corpus, q, k, used, norms) for q in queries])
    return ContrastProfile(rc=rc, k=k, measure_used=used)


def difficulty_split(profile: ContrastProfile, m: int = 100):
    """Ids of the m hardest (lowest-contrast) and m easiest queries.

    Ties go to the lowest id on the hard side and the highest id on the easy
    side, so the split is deterministic and disjoint whenever 2m <= q.
    """
    defined = np.flatnonzero(profile.defined)
    if defined.size < 2 * m:
        raise ValueError(
            f"need at least {2 * m} queries with defined contrast, have {defined.size}"
        )
    scores = profile.rc[defined]
    hardest = defined[np.lexsort((defined, scores))[:m]]
    easiest = defined[np.lexsort((-defined, -scores))[:m]]
    return hardest, easiest


def write_contrast_csv(profile: ContrastProfile, path, m: int = 100) -> None:
    """CSV with columns query_id, rc, split (hardest/easiest/mid/undefined)."""
    split = np.full(profile.rc.shape[0], "mid", dtype=object)
    split[~profile.defined] = "undefined"
    if int(profile.defined.sum()) >= 2 * m:
        hardest, easiest = difficulty_split(profile, m)
        split[hardest] = "hardest"
        split[easiest] = "easiest"
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["query_id", "rc", "split"])
        for i, (value, tag) in enumerate(zip(profile.rc, split)):
            writer.writerow([i, "" if np.isnan(value) else repr(float(value)), tag])


@dataclass
class MahalanobisModel:
    """Mean and regularized covariance factor fitted to a corpus sample."""

    mean: np.ndarray  # (d,) float64
    chol: np.ndarray  # (d, d) float64, lower Cholesky factor of Sigma + eps*I
    sample_size: int


def mahalanobis_fit(
    sample: np.ndarray, max_rows: int = MAHALANOBIS_MAX_FIT_ROWS, seed: int = 0
) -> MahalanobisModel:
    """Fit mean and covariance, regularized with eps = 1e-6 tr(Sigma)/d.

    Samples larger than ``max_rows`` are subsampled with the given seed.
    """
    x = np.asarray(sample, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("mahalanobis_fit expects a 2-D sample with n >= 2")
    if x.shape[0] > max_rows:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(x.shape[0], size=max_rows, replace=False))
        x = x[keep]
    mean = x.mean(axis=0)
    cov = np.atleast_2d(np.cov(x, rowvar=False))
    d = cov.shape[0]
    eps = 1e-6 * np.trace(cov) / d
    cov_reg = cov + eps * np.eye(d)
    try:
        chol = np.linalg.cholesky(cov_reg)
    except np.linalg.LinAlgError as exc:  # regularization should prevent this
        raise AssertionError("regularized covariance is not positive definite") from exc
    return MahalanobisModel(mean=mean, chol=chol, sample_size=x.shape[0])


def mahalanobis_score(model: MahalanobisModel, points: np.ndarray) -> np.ndarray:
    """sqrt((x - mu)^T Sigma_reg^{-1} (x - mu)) for every row of ``points``."""
    x = np.atleast_2d(np.asarray(points, dtype=np.float64))
    diff = (x - model.mean).T
    y = np.linalg.solve(model.chol, diff)
    return np.sqrt(np.einsum("ij,ij->j", y, y))


def pca_project(
    fit_points: np.ndarray, project_points: np.ndarray, n_components: int = 2
) -> np.ndarray:
    """Project onto the top principal components of the fit covariance.

    Component signs are fixed so the largest-magnitude loading of each
    component is positive, making the projection deterministic.
    """
    fit = np.asarray(fit_points, dtype=np.float64)
    if fit.ndim != 2 or fit.shape[0] < 2:
        raise ValueError("pca_project needs at least 2 fit points")
    if fit.shape[1] < n_components:
        raise ValueError(f"dimension {fit.shape[1]} < {n_components} components")
    mean = fit.mean(axis=0)
    cov = np.atleast_2d(np.cov(fit, rowvar=False))
    eigvals, eigvecs = np.linalg.eigh(cov)
    components = eigvecs[:, ::-1][:, :n_components]
    for j in range(n_components):
        peak = int(np.argmax(np.abs(components[:, j])))
        if components[peak, j] < 0:
            components[:, j] = -components[:, j]
    x = np.atleast_2d(np.asarray(project_points, dtype=np.float64))
    return (x - mean) @ components


@dataclass
class ParetoPoint:
    """One (recall, throughput) operating configuration."""

    mean_recall: float
    qps: float
    config: object = field(default=None, compare=False)


def pareto_frontier(points) -> list:
    """Non-dominated subset of (recall, qps) points, sorted by recall ascending.

    A point is dominated when another has recall >= and qps >= with at least
    one strict inequality; exact duplicates therefore survive together.
    """
    pts = list(points)
    if not pts:
        raise ValueError("pareto_frontier of an empty point set is undefined")
    order = sorted(range(len(pts)), key=lambda i: (-pts[i].mean_recall, -pts[i].qps))
    survivors_rev = []
    best_qps = -np.inf
    i = 0
    while i < len(order):
        j = i
        while (
            j < len(order)
            and pts[order[j]].mean_recall == pts[order[i]].mean_recall
        ):
            j += 1
        group = order[i:j]
        group_max = max(pts[g].qps for g in group)
        if group_max > best_qps:
            survivors_rev.extend(g for g in group if pts[g].qps == group_max)
            best_qps = group_max
        i = j
    return [pts[g] for g in reversed(survivors_rev)]


def operating_point(points, recall_threshold: float):
    """Fastest configuration with mean recall >= threshold, or None.

    Works on a frontier or on raw points; absence is a value, not an error.
    """
    best = None
    for p in points:
        if p.mean_recall >= recall_threshold:
            if best is None or (p.qps, p.mean_recall) > (best.qps, best.mean_recall):
                best = p
    return best
