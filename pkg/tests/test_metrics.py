import numpy as np
import pytest

from vecbench.core import Measure
from vecbench.metrics import (
    ContrastProfile,
    ParetoPoint,
    contrast_profile,
    difficulty_split,
    mahalanobis_fit,
    mahalanobis_score,
    operating_point,
    pareto_frontier,
    pca_project,
    qps,
    recall,
    relative_contrast,
)
from vecbench.oracle import exact_knn, ground_truth_for_queries


class TestRecall:
    def test_exact_match_is_one(self):
        rng = np.random.default_rng(0)
        corpus = rng.standard_normal((50, 4)).astype(np.float32)
        q = rng.standard_normal(4).astype(np.float32)
        ids, dists = exact_knn(corpus, q, 10, Measure.EUCLIDEAN)
        assert recall(ids, dists, float(dists[-1]), 10) == 1.0

    def test_nine_of_ten(self):
        dists = np.array([0.1] * 9 + [9.9], dtype=np.float32)
        assert recall(np.arange(10), dists, 1.0, 10) == 0.9

    def test_short_result_penalized(self):
        assert recall(np.arange(4), np.full(4, 0.1, np.float32), 1.0, 10) == 0.4

    def test_tie_at_threshold_counts(self):
        """A returned id tied at the k-th distance counts even if the stored
        ground-truth ids kept a different member of the tie."""
        corpus = np.array([[0.0], [1.0], [2.0], [2.0]], dtype=np.float32)
        q = np.array([0.0], dtype=np.float32)
        gt = ground_truth_for_queries(corpus, q[None, :], 3, Measure.EUCLIDEAN)
        np.testing.assert_array_equal(gt.ids[0], [0, 1, 2])  # tie kept lower id
        returned_ids = np.array([0, 1, 3])
        returned_dists = np.array([0.0, 1.0, 2.0], dtype=np.float32)
        assert recall(returned_ids, returned_dists, float(gt.thresholds[0]), 3) == 1.0


class TestQps:
    def test_thousand_queries_one_second(self):
        assert qps([0.001] * 1000) == pytest.approx(1000.0)

    def test_single_query(self):
        assert qps([0.01]) == pytest.approx(100.0)

    def test_doubling_latency_halves_qps(self):
        lat = np.random.default_rng(0).uniform(0.001, 0.01, 50)
        assert qps(lat * 2) == pytest.approx(qps(lat) / 2)

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            qps([])


class TestRelativeContrast:
    corpus = np.array([[1.0], [2.0], [4.0]], dtype=np.float32)
    query = np.array([0.0], dtype=np.float32)

    def test_k1(self):
        rc = relative_contrast(self.corpus, self.query, 1, Measure.EUCLIDEAN)
        assert rc == pytest.approx(7.0 / 3.0, abs=1e-6)

    def test_k3(self):
        rc = relative_contrast(self.corpus, self.query, 3, Measure.EUCLIDEAN)
        assert rc == pytest.approx(7.0 / 12.0, abs=1e-6)

    def test_far_query_near_tight_cluster_has_rc_near_one(self):
        rng = np.random.default_rng(1)
        corpus = (rng.standard_normal((500, 8)) * 0.01).astype(np.float32)
        far = np.full(8, 50.0, dtype=np.float32)
        rc = relative_contrast(corpus, far, 10, Measure.EUCLIDEAN)
        assert 0.99 < rc < 1.01

    def test_undefined_rc_flagged_not_dropped(self):
        corpus = np.array([[0.0, 0.0], [1.0, 1.0]], dtype=np.float32)
        queries = np.array([[0.0, 0.0], [5.0, 5.0]], dtype=np.float32)
        profile = contrast_profile(corpus, queries, 1, Measure.EUCLIDEAN)
        assert np.isnan(profile.rc[0])  # query duplicates a corpus point
        assert profile.defined[1]
        assert profile.rc.shape == (2,)

    def test_inner_product_substitutes_cosine(self):
        rng = np.random.default_rng(2)
        corpus = rng.standard_normal((40, 6)).astype(np.float32)
        queries = rng.standard_normal((3, 6)).astype(np.float32)
        profile = contrast_profile(corpus, queries, 5, Measure.NEG_INNER_PRODUCT)
        assert profile.measure_used is Measure.COSINE
        assert (profile.rc[profile.defined] > 0).all()

    def test_scaling_whole_instance_preserves_rc(self):
        rng = np.random.default_rng(3)
        corpus = rng.standard_normal((60, 5)).astype(np.float32)
        q = rng.standard_normal(5).astype(np.float32)
        a = relative_contrast(corpus, q, 7, Measure.EUCLIDEAN)
        b = relative_contrast(corpus * 4.0, q * 4.0, 7, Measure.EUCLIDEAN)
        assert a == pytest.approx(b, rel=1e-6)


class TestDifficultySplit:
    def test_basic(self):
        profile = ContrastProfile(
            rc=np.array([0.5, 3.0, 1.0, 2.0]), k=1, measure_used=Measure.EUCLIDEAN
        )
        hardest, easiest = difficulty_split(profile, 1)
        np.testing.assert_array_equal(hardest, [0])
        np.testing.assert_array_equal(easiest, [1])

    def test_all_equal_uses_id_rule(self):
        profile = ContrastProfile(
            rc=np.ones(6), k=1, measure_used=Measure.EUCLIDEAN
        )
        hardest, easiest = difficulty_split(profile, 2)
        np.testing.assert_array_equal(sorted(hardest), [0, 1])
        np.testing.assert_array_equal(sorted(easiest), [4, 5])

    def test_disjoint(self):
        rng = np.random.default_rng(4)
        profile = ContrastProfile(
            rc=rng.uniform(0.3, 3.0, 50), k=1, measure_used=Measure.EUCLIDEAN
        )
        hardest, easiest = difficulty_split(profile, 25)
        assert not set(hardest.tolist()) & set(easiest.tolist())

    def test_needs_enough_defined(self):
        profile = ContrastProfile(
            rc=np.array([1.0, np.nan, 2.0]), k=1, measure_used=Measure.EUCLIDEAN
        )
        with pytest.raises(ValueError, match="defined"):
            difficulty_split(profile, 2)


class TestMahalanobis:
    def test_zero_at_mean(self):
        rng = np.random.default_rng(5)
        sample = rng.standard_normal((500, 4))
        model = mahalanobis_fit(sample)
        assert mahalanobis_score(model, model.mean[None, :])[0] == pytest.approx(0.0, abs=1e-9)

    def test_identity_covariance_is_euclidean(self):
        rng = np.random.default_rng(6)
        sample = rng.standard_normal((20000, 3))
        model = mahalanobis_fit(sample)
        pts = rng.standard_normal((10, 3))
        got = mahalanobis_score(model, pts)
        want = np.linalg.norm(pts - model.mean, axis=1)
        np.testing.assert_allclose(got, want, rtol=0.05)

    def test_gaussian_mean_score_near_sqrt_d(self):
        """Chi-distribution mean: samples of N(0, I_64) score about sqrt(64)."""
        rng = np.random.default_rng(7)
        sample = rng.standard_normal((10000, 64))
        model = mahalanobis_fit(sample)
        scores = mahalanobis_score(model, rng.standard_normal((10000, 64)))
        assert abs(scores.mean() - 8.0) / 8.0 < 0.1

    def test_subsampling_is_seeded(self):
        rng = np.random.default_rng(8)
        sample = rng.standard_normal((5000, 3))
        a = mahalanobis_fit(sample, max_rows=1000, seed=3)
        b = mahalanobis_fit(sample, max_rows=1000, seed=3)
        np.testing.assert_array_equal(a.mean, b.mean)
        assert a.sample_size == 1000


class TestPCA:
    def test_2d_projection_preserves_distances(self):
        rng = np.random.default_rng(9)
        pts = rng.standard_normal((40, 2))
        proj = pca_project(pts, pts, 2)
        for i in range(0, 20, 3):
            want = np.linalg.norm(pts[i] - pts[i + 1])
            got = np.linalg.norm(proj[i] - proj[i + 1])
            assert got == pytest.approx(want, abs=1e-5)

    def test_line_has_negligible_second_component(self):
        t = np.linspace(-1, 1, 100)[:, None]
        pts = t * np.array([[1.0, 2.0, -0.5]])
        proj = pca_project(pts, pts, 2)
        assert proj[:, 1].var() < 1e-12

    def test_component_variances_ordered(self):
        rng = np.random.default_rng(10)
        pts = rng.standard_normal((300, 5)) * np.array([5.0, 2.0, 1.0, 0.5, 0.1])
        proj = pca_project(pts, pts, 2)
        assert proj[:, 0].var() >= proj[:, 1].var()

    def test_deterministic_sign(self):
        rng = np.random.default_rng(11)
        pts = rng.standard_normal((100, 4))
        a = pca_project(pts, pts, 2)
        b = pca_project(pts, pts, 2)
        np.testing.assert_array_equal(a, b)

    def test_needs_two_dims(self):
        with pytest.raises(ValueError, match="components"):
            pca_project(np.zeros((10, 1)), np.zeros((2, 1)), 2)


def brute_force_frontier(points):
    """O(n^2) dominance filter used as the oracle for pareto_frontier."""
    keep = []
    for i, p in enumerate(points):
        dominated = False
        for j, q in enumerate(points):
            if i == j:
                continue
            if (
                q.mean_recall >= p.mean_recall
                and q.qps >= p.qps
                and (q.mean_recall > p.mean_recall or q.qps > p.qps)
            ):
                dominated = True
                break
        if not dominated:
            keep.append(p)
    keep.sort(key=lambda p: p.mean_recall)
    return keep


class TestPareto:
    def test_documented_example(self):
        pts = [ParetoPoint(0.9, 100), ParetoPoint(0.95, 80), ParetoPoint(0.8, 90)]
        frontier = pareto_frontier(pts)
        assert [(p.mean_recall, p.qps) for p in frontier] == [(0.9, 100), (0.95, 80)]

    def test_single_point(self):
        pts = [ParetoPoint(0.5, 10)]
        assert pareto_frontier(pts) == pts

    def test_matches_brute_force_on_random_points(self):
        rng = np.random.default_rng(12)
        pts = [
            ParetoPoint(float(r), float(q))
            for r, q in zip(rng.uniform(0, 1, 200), rng.uniform(1, 1000, 200))
        ]
        # add exact duplicates and recall ties
        pts.append(ParetoPoint(pts[0].mean_recall, pts[0].qps))
        pts.append(ParetoPoint(pts[1].mean_recall, pts[1].qps * 2))
        got = {(p.mean_recall, p.qps) for p in pareto_frontier(pts)}
        want = {(p.mean_recall, p.qps) for p in brute_force_frontier(pts)}
        assert got == want

    def test_frontier_is_fixpoint(self):
        rng = np.random.default_rng(13)
        pts = [
            ParetoPoint(float(r), float(q))
            for r, q in zip(rng.uniform(0, 1, 100), rng.uniform(1, 1000, 100))
        ]
        once = pareto_frontier(pts)
        twice = pareto_frontier(once)
        assert [(p.mean_recall, p.qps) for p in once] == [
            (p.mean_recall, p.qps) for p in twice
        ]

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            pareto_frontier([])


class TestOperatingPoint:
    def test_picks_config_meeting_threshold(self):
        pts = [ParetoPoint(0.9, 100), ParetoPoint(0.96, 40)]
        assert operating_point(pts, 0.95).qps == 40

    def test_unreachable_returns_none(self):
        pts = [ParetoPoint(0.9, 100), ParetoPoint(0.96, 40)]
        assert operating_point(pts, 0.99) is None

    def test_threshold_zero_returns_global_max_qps(self):
        pts = [ParetoPoint(0.9, 100), ParetoPoint(0.96, 40)]
        assert operating_point(pts, 0.0).qps == 100
