import numpy as np
import pytest

from vecbench.core import Measure, normalize_rows, pack_bits
from vecbench.indexes import FAMILIES, build_index, load_index
from vecbench.metrics import recall
from vecbench.oracle import exact_knn, ground_truth_for_queries


def _queries(ds, count=None):
    q = np.asarray(ds.test_queries)
    return q if count is None else q[:count]


class TestBruteForce:
    def test_identical_to_oracle(self, small_dataset):
        """Definitional: brute force equals exact_knn bit-for-bit."""
        index = build_index("BruteForce", small_dataset.corpus, small_dataset.measure)
        for q in _queries(small_dataset, 20):
            res = index.search(q, 10)
            ids, dists = exact_knn(small_dataset.corpus, q, 10, small_dataset.measure)
            np.testing.assert_array_equal(res.ids, ids)
            np.testing.assert_array_equal(res.dists, dists)
            assert res.n_candidates == small_dataset.n

    def test_hamming_corpus(self):
        rng = np.random.default_rng(0)
        bits = pack_bits(rng.integers(0, 2, size=(300, 100)))
        queries = pack_bits(rng.integers(0, 2, size=(5, 100)))
        index = build_index("BruteForce", bits, Measure.HAMMING)
        for i in range(5):
            res = index.search(queries.row(i), 7)
            ids, dists = exact_knn(bits, queries.row(i), 7, Measure.HAMMING)
            np.testing.assert_array_equal(res.ids, ids)
            np.testing.assert_array_equal(res.dists, dists)

    def test_rejects_build_params(self, small_dataset):
        with pytest.raises(ValueError, match="no build params"):
            build_index("BruteForce", small_dataset.corpus, small_dataset.measure, {"x": 1})


@pytest.fixture(scope="module")
def ivf_index(small_dataset):
    return build_index(
        "IVF", small_dataset.corpus, small_dataset.measure, {"C": 32}, seed=5
    )


class TestIVF:
    def test_full_probing_matches_oracle(self, small_dataset, ivf_index):
        for q in _queries(small_dataset, 10):
            res = ivf_index.search(q, 10, {"nprobe": 32})
            ids, _ = exact_knn(small_dataset.corpus, q, 10, small_dataset.measure)
            np.testing.assert_array_equal(res.ids, ids)

    def test_candidate_count_is_sum_of_probed_lists(self, small_dataset, ivf_index):
        q = _queries(small_dataset, 1)[0]
        probes = ivf_index._probe_order(q, 4)
        expected = sum(ivf_index.list_members(int(p)).size for p in probes)
        res = ivf_index.search(q, 10, {"nprobe": 4})
        assert res.n_candidates == expected

    def test_single_probe_scans_only_nearest_blob(self):
        """Two far-apart blobs: a query at blob A's mean only scans A's members."""
        rng = np.random.default_rng(1)
        blob_a = rng.normal(0, 0.1, size=(200, 4)) + np.array([10.0, 0, 0, 0])
        blob_b = rng.normal(0, 0.1, size=(200, 4)) - np.array([10.0, 0, 0, 0])
        corpus = np.vstack([blob_a, blob_b]).astype(np.float32)
        index = build_index("IVF", corpus, Measure.EUCLIDEAN, {"C": 2}, seed=2)
        res = index.search(np.array([10.0, 0, 0, 0], dtype=np.float32), 5, {"nprobe": 1})
        assert res.n_candidates == 200
        assert (res.ids < 200).all()
        cands = index.candidates(
            np.array([10.0, 0, 0, 0], dtype=np.float32), {"nprobe": 1}
        )
        assert set(cands.tolist()) <= set(range(200))

    def test_nprobe_clamped_to_c(self, small_dataset, ivf_index):
        q = _queries(small_dataset, 1)[0]
        a = ivf_index.search(q, 10, {"nprobe": 32})
        b = ivf_index.search(q, 10, {"nprobe": 10_000})
        np.testing.assert_array_equal(a.ids, b.ids)

    def test_requires_nprobe(self, small_dataset, ivf_index):
        with pytest.raises(ValueError, match="nprobe"):
            ivf_index.search(_queries(small_dataset, 1)[0], 10)

    def test_unknown_query_param(self, small_dataset, ivf_index):
        with pytest.raises(ValueError, match="unknown query params"):
            ivf_index.search(_queries(small_dataset, 1)[0], 10, {"nprobe": 4, "ef": 2})

    def test_dimension_mismatch(self, ivf_index):
        with pytest.raises(ValueError, match="dimension"):
            ivf_index.search(np.zeros(3, dtype=np.float32), 5, {"nprobe": 2})


class TestIVFPQ:
    def test_full_rerank_equals_plain_ivf(self, small_dataset):
        ivf = build_index("IVF", small_dataset.corpus, small_dataset.measure, {"C": 16}, seed=5)
        ivfpq = build_index(
            "IVFPQ", small_dataset.corpus, small_dataset.measure,
            {"C": 16, "m": 4, "b": 6}, seed=5,
        )
        for q in _queries(small_dataset, 10):
            a = ivf.search(q, 10, {"nprobe": 4})
            b = ivfpq.search(q, 10, {"nprobe": 4, "rerank_count": small_dataset.n})
            np.testing.assert_array_equal(a.ids, b.ids)
            np.testing.assert_array_equal(a.dists, b.dists)

    def test_zero_residual_corpus_makes_adc_exact(self):
        """Corpus rows equal to their reconstructions: ADC ranking is exact, so
        rerank_count == k already returns the true top k."""
        rng = np.random.default_rng(3)
        locations = rng.standard_normal((16, 8)).astype(np.float32)
        corpus = np.repeat(locations, 8, axis=0)
        index = build_index(
            "IVFPQ", corpus, Measure.EUCLIDEAN, {"C": 16, "m": 4, "b": 4}, seed=7
        )
        bf = build_index("BruteForce", corpus, Measure.EUCLIDEAN)
        for _ in range(5):
            q = rng.standard_normal(8).astype(np.float32)
            got = index.search(q, 10, {"nprobe": 16, "rerank_count": 10})
            want = bf.search(q, 10)
            np.testing.assert_array_equal(got.ids, want.ids)

    def test_low_rerank_warns(self, small_dataset):
        index = build_index(
            "IVFPQ", small_dataset.corpus, small_dataset.measure,
            {"C": 16, "m": 4, "b": 4}, seed=5,
        )
        with pytest.warns(UserWarning, match="caps recall"):
            index.search(_queries(small_dataset, 1)[0], 10, {"nprobe": 4, "rerank_count": 5})

    def test_cosine_rejected(self, small_dataset):
        with pytest.raises(ValueError, match="normalize"):
            build_index(
                "IVFPQ", small_dataset.corpus, Measure.COSINE,
                {"C": 8, "m": 4, "b": 4}, seed=5,
            )

    def test_inner_product_route(self):
        from vecbench.datasets import generate_ood_mips

        ds = generate_ood_mips(n=1500, d=16, query_mean_norm=1.0, seed=4, n_test=50, n_train=50)
        index = build_index("IVFPQ", ds.corpus, ds.measure, {"C": 8, "m": 4, "b": 6}, seed=5)
        bf = build_index("BruteForce", ds.corpus, ds.measure)
        hits = 0
        for q in _queries(ds, 20):
            got = index.search(q, 10, {"nprobe": 8, "rerank_count": 300})
            want = bf.search(q, 10)
            hits += len(set(got.ids.tolist()) & set(want.ids.tolist()))
        assert hits / 200 > 0.9


class TestBeamGraph:
    def test_tiny_corpus_is_complete_graph(self):
        rng = np.random.default_rng(5)
        corpus = rng.standard_normal((9, 4)).astype(np.float32)
        index = build_index(
            "BeamGraph", corpus, Measure.EUCLIDEAN, {"M": 8, "ef_construction": 8}, seed=0
        )
        assert (index.deg == 8).all()
        for q in rng.standard_normal((5, 4)).astype(np.float32):
            res = index.search(q, 3, {"ef": 9})
            ids, _ = exact_knn(corpus, q, 3, Measure.EUCLIDEAN)
            np.testing.assert_array_equal(res.ids, ids)

    def test_full_beam_on_connected_graph_has_full_recall(self, small_dataset, small_gt):
        index = build_index(
            "BeamGraph", small_dataset.corpus, small_dataset.measure,
            {"M": 16, "ef_construction": 64}, seed=0,
        )
        # connectivity from the entry point, asserted before the recall claim
        from collections import deque

        seen = np.zeros(small_dataset.n, dtype=bool)
        queue = deque([index.entry])
        seen[index.entry] = True
        while queue:
            u = queue.popleft()
            for e in range(index.deg[u]):
                v = index.adj[u, e]
                if not seen[v]:
                    seen[v] = True
                    queue.append(v)
        assert seen.all()
        for i, q in enumerate(_queries(small_dataset, 20)):
            res = index.search(q, 10, {"ef": small_dataset.n})
            assert recall(res.ids, res.dists, float(small_gt.thresholds[i]), 10) == 1.0

    def test_ef_below_k_rejected(self, small_dataset):
        index = build_index(
            "BeamGraph", small_dataset.corpus, small_dataset.measure,
            {"M": 4, "ef_construction": 8}, seed=0,
        )
        with pytest.raises(ValueError, match="ef"):
            index.search(_queries(small_dataset, 1)[0], 10, {"ef": 5})

    def test_build_param_validation(self, small_dataset):
        with pytest.raises(ValueError, match="M must"):
            build_index("BeamGraph", small_dataset.corpus, small_dataset.measure,
                        {"M": 1, "ef_construction": 8})
        with pytest.raises(ValueError, match="ef_construction"):
            build_index("BeamGraph", small_dataset.corpus, small_dataset.measure,
                        {"M": 8, "ef_construction": 4})


class TestRPForest:
    def test_single_tree_full_leaf_is_brute_force(self, small_dataset):
        index = build_index(
            "RPForest", small_dataset.corpus, small_dataset.measure,
            {"T": 1, "leaf_size": small_dataset.n}, seed=0,
        )
        for q in _queries(small_dataset, 5):
            res = index.search(q, 10, {"votes": 1})
            ids, _ = exact_knn(small_dataset.corpus, q, 10, small_dataset.measure)
            np.testing.assert_array_equal(res.ids, ids)
            assert res.n_candidates == small_dataset.n

    def test_votes_filter_is_monotone(self, small_dataset):
        index = build_index(
            "RPForest", small_dataset.corpus, small_dataset.measure,
            {"T": 8, "leaf_size": 64}, seed=0,
        )
        q = _queries(small_dataset, 1)[0]
        c1 = set(index.candidates(q, {"votes": 1}).tolist())
        c2 = set(index.candidates(q, {"votes": 2}).tolist())
        c3 = set(index.candidates(q, {"votes": 3}).tolist())
        assert c3 <= c2 <= c1

    def test_votes_above_tree_count_rejected(self, small_dataset):
        index = build_index(
            "RPForest", small_dataset.corpus, small_dataset.measure,
            {"T": 4, "leaf_size": 64}, seed=0,
        )
        with pytest.raises(ValueError, match="votes"):
            index.search(_queries(small_dataset, 1)[0], 10, {"votes": 5})

    def test_deterministic(self, small_dataset):
        q = _queries(small_dataset, 1)[0]
        runs = []
        for _ in range(2):
            index = build_index(
                "RPForest", small_dataset.corpus, small_dataset.measure,
                {"T": 6, "leaf_size": 32}, seed=9,
            )
            runs.append(index.search(q, 10, {"votes": 1}).ids)
        np.testing.assert_array_equal(runs[0], runs[1])


@pytest.fixture(scope="module")
def cosine_corpus():
    rng = np.random.default_rng(6)
    return normalize_rows(rng.standard_normal((2000, 12)).astype(np.float32))


class TestLSH:
    def test_zero_bits_is_brute_force(self, cosine_corpus):
        index = build_index("LSH", cosine_corpus, Measure.COSINE, {"L": 2, "h": 0}, seed=0)
        q = cosine_corpus[0] + np.float32(0.01)
        res = index.search(q, 10, {"probes": 1})
        ids, _ = exact_knn(cosine_corpus, q, 10, Measure.COSINE)
        np.testing.assert_array_equal(res.ids, ids)
        assert res.n_candidates == 2000

    def test_duplicate_of_query_always_candidate(self, cosine_corpus):
        index = build_index("LSH", cosine_corpus, Measure.COSINE, {"L": 4, "h": 10}, seed=1)
        for i in (0, 5, 99):
            cands = index.candidates(cosine_corpus[i], {"probes": 1})
            assert i in set(cands.tolist())

    def test_non_cosine_rejected(self, cosine_corpus):
        with pytest.raises(ValueError, match="cosine"):
            build_index("LSH", cosine_corpus, Measure.EUCLIDEAN, {"L": 2, "h": 4})

    def test_empty_result_reported_short(self):
        # two antipodal clusters; a query opposite everything can miss all buckets
        rng = np.random.default_rng(2)
        corpus = normalize_rows(np.abs(rng.standard_normal((50, 6))).astype(np.float32))
        index = build_index("LSH", corpus, Measure.COSINE, {"L": 1, "h": 24}, seed=3)
        res = index.search(-normalize_rows(np.abs(rng.standard_normal((1, 6))))[0], 5, {"probes": 1})
        assert res.ids.size == 0
        assert res.n_candidates == 0

    def test_collision_probability_matches_angle_formula(self):
        """Sign-collision rate of two vectors at angle theta is (1 - theta/pi)^h."""
        rng = np.random.default_rng(7)
        d, h, tables = 24, 4, 400
        a = np.zeros(d, dtype=np.float32)
        a[0] = 1.0
        for theta in (0.25, 0.8, 1.4):
            b = np.zeros(d, dtype=np.float32)
            b[0] = np.cos(theta)
            b[1] = np.sin(theta)
            corpus = np.vstack([a, b])
            index = build_index("LSH", corpus, Measure.COSINE, {"L": tables, "h": h}, seed=11)
            collisions = sum(
                1
                for l in range(tables)
                if index.keys_sorted[l][index.ids_sorted[l].tolist().index(0)]
                == index.keys_sorted[l][index.ids_sorted[l].tolist().index(1)]
            )
            expected = (1 - theta / np.pi) ** h
            assert abs(collisions / tables - expected) < 0.05


class TestQueryAwareIVF:
    def test_train_on_corpus_behaves_like_ivf(self, small_dataset):
        corpus = np.asarray(small_dataset.corpus)
        ivf = build_index("IVF", corpus, small_dataset.measure, {"C": 16}, seed=3)
        qa = build_index(
            "QueryAwareIVF", corpus, small_dataset.measure, {"C": 16}, seed=3,
            train_queries=corpus,
        )
        np.testing.assert_array_equal(ivf.centroids, qa.centroids)
        np.testing.assert_array_equal(ivf.member_ids, qa.member_ids)
        for q in _queries(small_dataset, 10):
            a = ivf.search(q, 10, {"nprobe": 4})
            b = qa.search(q, 10, {"nprobe": 4})
            np.testing.assert_array_equal(a.ids, b.ids)

    def test_missing_train_queries_rejected(self, small_dataset):
        with pytest.raises(ValueError, match="train queries"):
            build_index("QueryAwareIVF", small_dataset.corpus, small_dataset.measure, {"C": 8})

    def test_deterministic(self, small_dataset):
        corpus = np.asarray(small_dataset.corpus)
        train = np.asarray(small_dataset.test_queries)
        a = build_index("QueryAwareIVF", corpus, small_dataset.measure, {"C": 8},
                        seed=4, train_queries=train)
        b = build_index("QueryAwareIVF", corpus, small_dataset.measure, {"C": 8},
                        seed=4, train_queries=train)
        np.testing.assert_array_equal(a.centroids, b.centroids)
        np.testing.assert_array_equal(a.member_ids, b.member_ids)


FAMILY_CONFIGS = {
    "BruteForce": ({}, {}),
    "IVF": ({"C": 16}, {"nprobe": 4}),
    "IVFPQ": ({"C": 16, "m": 4, "b": 6}, {"nprobe": 4, "rerank_count": 100}),
    "BeamGraph": ({"M": 8, "ef_construction": 32}, {"ef": 30}),
    "RPForest": ({"T": 6, "leaf_size": 64}, {"votes": 1}),
    "QueryAwareIVF": ({"C": 16}, {"nprobe": 4}),
}


@pytest.mark.parametrize("family", sorted(FAMILY_CONFIGS))
def test_search_contract(small_dataset, family):
    """Unique valid ids, exact reranked distances, ascending (dist, id) order."""
    from vecbench.core import pairwise_dissimilarity

    build_params, query_params = FAMILY_CONFIGS[family]
    index = build_index(
        family, small_dataset.corpus, small_dataset.measure, build_params,
        seed=8, train_queries=np.asarray(small_dataset.test_queries),
    )
    corpus = np.asarray(small_dataset.corpus)
    for q in _queries(small_dataset, 10):
        res = index.search(q, 10, query_params)
        assert len(set(res.ids.tolist())) == res.ids.size
        assert ((res.ids >= 0) & (res.ids < small_dataset.n)).all()
        order_keys = list(zip(res.dists.tolist(), res.ids.tolist()))
        assert order_keys == sorted(order_keys)
        exact = pairwise_dissimilarity(corpus[res.ids], q, small_dataset.measure)
        np.testing.assert_array_equal(res.dists, exact.astype(np.float32))


@pytest.mark.parametrize("family", sorted(FAMILY_CONFIGS))
def test_determinism_and_serialization(small_dataset, tmp_path, family):
    """Same seed -> byte-identical container and identical search ids."""
    build_params, query_params = FAMILY_CONFIGS[family]
    train = np.asarray(small_dataset.test_queries)
    paths = []
    results = []
    for run in range(2):
        index = build_index(
            family, small_dataset.corpus, small_dataset.measure, build_params,
            seed=21, train_queries=train,
        )
        path = tmp_path / f"{family}-{run}.vidx"
        index.save(path)
        paths.append(path)
        results.append(index.search(_queries(small_dataset, 1)[0], 10, query_params))
    assert paths[0].read_bytes() == paths[1].read_bytes()
    np.testing.assert_array_equal(results[0].ids, results[1].ids)
    loaded = load_index(paths[0], small_dataset.corpus)
    res = loaded.search(_queries(small_dataset, 1)[0], 10, query_params)
    np.testing.assert_array_equal(res.ids, results[0].ids)
    np.testing.assert_array_equal(res.dists, results[0].dists)


def test_load_rejects_corrupted_magic(small_dataset, tmp_path):
    index = build_index("IVF", small_dataset.corpus, small_dataset.measure, {"C": 4}, seed=0)
    path = tmp_path / "x.vidx"
    index.save(path)
    blob = bytearray(path.read_bytes())
    blob[:4] = b"JUNK"
    path.write_bytes(bytes(blob))
    with pytest.raises(ValueError, match="magic"):
        load_index(path, small_dataset.corpus)


def test_load_rejects_wrong_corpus_shape(small_dataset, tmp_path):
    index = build_index("IVF", small_dataset.corpus, small_dataset.measure, {"C": 4}, seed=0)
    path = tmp_path / "x.vidx"
    index.save(path)
    with pytest.raises(ValueError, match="does not[\\s\\S]*match"):
        load_index(path, np.asarray(small_dataset.corpus)[:100])


@pytest.mark.parametrize(
    "family,build_params,knob,values",
    [
        ("IVF", {"C": 32}, "nprobe", [1, 2, 4, 8, 16, 32]),
        ("BeamGraph", {"M": 12, "ef_construction": 48}, "ef", [10, 20, 40, 80, 160]),
        (
            "IVFPQ",
            {"C": 32, "m": 4, "b": 6},
            "rerank_count",
            [10, 40, 160, 640],
        ),
    ],
)
def test_mean_recall_monotone_in_search_knob(
    small_dataset, small_gt, family, build_params, knob, values
):
    """More probing/beam/rerank never hurts mean recall (0.005 slack)."""
    index = build_index(family, small_dataset.corpus, small_dataset.measure, build_params, seed=2)
    queries = _queries(small_dataset, 150)
    means = []
    for value in values:
        qp = {knob: value}
        if family == "IVFPQ":
            qp["nprobe"] = 8
        recs = [
            recall(r.ids, r.dists, float(small_gt.thresholds[i]), 10)
            for i, r in ((i, index.search(q, 10, qp)) for i, q in enumerate(queries))
        ]
        means.append(float(np.mean(recs)))
    for lo, hi in zip(means, means[1:]):
        assert hi >= lo - 0.005


@pytest.mark.parametrize("family", sorted(FAMILY_CONFIGS))
def test_power_of_two_scaling_leaves_ids_unchanged(small_dataset, family):
    """Scaling the whole instance by 4 (exact in float) preserves id sequences
    under Euclidean."""
    build_params, query_params = FAMILY_CONFIGS[family]
    corpus = np.asarray(small_dataset.corpus)
    train = np.asarray(small_dataset.test_queries)
    a = build_index(family, corpus, Measure.EUCLIDEAN, build_params, seed=13,
                    train_queries=train)
    b = build_index(family, corpus * np.float32(4.0), Measure.EUCLIDEAN, build_params,
                    seed=13, train_queries=train * np.float32(4.0))
    for q in _queries(small_dataset, 5):
        ra = a.search(q, 10, query_params)
        rb = b.search(q * np.float32(4.0), 10, query_params)
        np.testing.assert_array_equal(ra.ids, rb.ids)


def test_unknown_family_rejected(small_dataset):
    with pytest.raises(ValueError, match="unknown index family"):
        build_index("Annoy", small_dataset.corpus, small_dataset.measure)
