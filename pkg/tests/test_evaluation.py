import numpy as np
import pytest

from conftest import random_urm
from ganmf.baselines import ItemKNNCosine
from ganmf.evaluation import (
    evaluate,
    evaluate_by_profile_length,
    map_at_k,
    ndcg_at_k,
    rank_items,
    similarity_stats,
)


class TestNdcg:
    def test_ideal_ranking(self):
        assert ndcg_at_k([1, 2, 3], {1, 2, 3}, 3) == pytest.approx(1.0)

    def test_no_hits(self):
        assert ndcg_at_k([4, 5, 6], {1, 2}, 3) == 0.0

    def test_worked_example(self):
        # Hits at positions 2 and 5, two relevant items, cutoff 5.
        ranked = [9, 1, 8, 7, 2]
        value = ndcg_at_k(ranked, {1, 2}, 5)
        expected = (1 / np.log2(3) + 1 / np.log2(6)) / (1.0 + 1 / np.log2(3))
        assert value == pytest.approx(expected, abs=1e-12)
        assert round(value, 5) == 0.62405

    def test_empty_relevant(self):
        assert ndcg_at_k([1, 2], set(), 2) == 0.0

    def test_bad_cutoff(self):
        with pytest.raises(ValueError):
            ndcg_at_k([1], {1}, 0)


class TestMap:
    def test_worked_example(self):
        assert map_at_k([9, 1, 8, 7, 2], {1, 2}, 5) == pytest.approx(0.45, abs=1e-12)

    def test_perfect_ranking(self):
        assert map_at_k([3, 1], {1, 3}, 5) == pytest.approx(1.0)

    def test_zero_hits(self):
        assert map_at_k([4, 5], {1}, 5) == 0.0

    def test_normalization_caps_at_cutoff(self):
        # 10 relevant items but cutoff 2: perfect prefix still scores 1.
        assert map_at_k([0, 1], set(range(10)), 2) == pytest.approx(1.0)


class TestMetricProperties:
    @pytest.mark.parametrize("seed", range(20))
    def test_monotone_transform_invariance_via_ranking(self, seed):
        rng = np.random.default_rng(seed)
        scores = rng.normal(size=30)
        ranked_a = rank_items(scores, np.array([], dtype=int))
        ranked_b = rank_items(np.exp(scores) * 3.0, np.array([], dtype=int))
        assert np.array_equal(ranked_a, ranked_b)

    @pytest.mark.parametrize("seed", range(30))
    def test_in_unit_interval_and_vs_bruteforce(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(5, 40))
        ranked = rng.permutation(n)[: int(rng.integers(1, n + 1))].tolist()
        relevant = set(rng.choice(n, size=int(rng.integers(1, n)), replace=False).tolist())
        for k in (1, 5, 10):
            nd = ndcg_at_k(ranked, relevant, k)
            ap = map_at_k(ranked, relevant, k)
            assert 0.0 <= nd <= 1.0 and 0.0 <= ap <= 1.0
            # brute force re-derivation
            dcg = sum(
                1.0 / np.log2(p + 1)
                for p, item in enumerate(ranked[:k], start=1)
                if item in relevant
            )
            idcg = sum(1.0 / np.log2(p + 1) for p in range(1, min(k, len(relevant)) + 1))
            assert abs(nd - dcg / idcg) < 1e-12
            hits, ap_sum = 0, 0.0
            for p, item in enumerate(ranked[:k], start=1):
                if item in relevant:
                    hits += 1
                    ap_sum += hits / p
            assert abs(ap - ap_sum / min(k, len(relevant))) < 1e-12

    def test_irrelevant_tail_item_never_helps(self):
        ranked = [1, 7, 2]
        with_tail = ranked + [99]
        for k in (3, 4):
            assert ndcg_at_k(with_tail, {1, 2}, k) <= ndcg_at_k(ranked, {1, 2}, k) + 1e-15
            assert map_at_k(with_tail, {1, 2}, k) <= map_at_k(ranked, {1, 2}, k) + 1e-15


class _OracleModel:
    """Scores each user's test items above everything else."""

    def __init__(self, test):
        self.test = test

    def score_users(self, users):
        out = np.zeros((len(users), self.test.n_items))
        for row, u in enumerate(users):
            out[row, self.test.row_items(int(u))] = 1.0
        return out


class _RandomModel:
    def __init__(self, n_items, seed):
        self.n_items = n_items
        self.rng = np.random.default_rng(seed)

    def score_users(self, users):
        return self.rng.random((len(users), self.n_items))


class TestEvaluate:
    def test_oracle_model_scores_one(self):
        rng = np.random.default_rng(0)
        urm = random_urm(rng, 30, 20, min_per_user=4)
        from ganmf.data import split

        bundle = split(urm, seed=1)
        report = evaluate(_OracleModel(bundle.test), bundle.train, bundle.test)
        assert report.n_users_evaluated == 30
        for k in (5, 20):
            assert report.ndcg[k] == pytest.approx(1.0)
            assert report.map[k] == pytest.approx(1.0)

    def test_matches_bruteforce_reimplementation(self):
        rng = np.random.default_rng(1)
        urm = random_urm(rng, 30, 25, min_per_user=3)
        from ganmf.data import split

        bundle = split(urm, seed=2)
        report = evaluate(_RandomModel(25, seed=3), bundle.train, bundle.test, cutoffs=(5, 20))
        # independent per-user loop using python sets and sorting
        model2 = _RandomModel(25, seed=3)
        nd_sum = {5: 0.0, 20: 0.0}
        ap_sum = {5: 0.0, 20: 0.0}
        n = 0
        for u in range(30):
            relevant = set(bundle.test.row_items(u).tolist())
            if not relevant:
                continue
            s = model2.score_users([u])[0]
            seen = set(bundle.train.row_items(u).tolist())
            candidates = [i for i in range(25) if i not in seen]
            ranked = sorted(candidates, key=lambda i: (-s[i], i))
            n += 1
            for k in (5, 20):
                nd_sum[k] += ndcg_at_k(ranked, relevant, k)
                ap_sum[k] += map_at_k(ranked, relevant, k)
        assert n == report.n_users_evaluated
        for k in (5, 20):
            assert report.ndcg[k] == pytest.approx(nd_sum[k] / n, abs=1e-12)
            assert report.map[k] == pytest.approx(ap_sum[k] / n, abs=1e-12)

    def test_random_scorer_near_analytic_expectation(self):
        # 1000 users, each with R relevant among N unseen candidate items.
        import scipy.sparse as sp

        from ganmf.data import Urm

        n_users, n_unseen, n_rel = 1000, 50, 5
        train = Urm(sp.csr_matrix((n_users, n_unseen)), [str(u) for u in range(n_users)], [str(i) for i in range(n_unseen)])
        rows = []
        rng = np.random.default_rng(4)
        for _ in range(n_users):
            rows.append(np.sort(rng.choice(n_unseen, n_rel, replace=False)))
        indptr = np.concatenate([[0], np.cumsum([n_rel] * n_users)])
        test = Urm(
            sp.csr_matrix((np.ones(n_users * n_rel), np.concatenate(rows), indptr), shape=(n_users, n_unseen)),
            train.user_ids,
            train.item_ids,
        )
        k = 5
        # exact expectation of AP@k under a uniformly random ranking
        pair = n_rel * (n_rel - 1) / (n_unseen * (n_unseen - 1))
        single = n_rel / n_unseen
        e_ap = sum((1 / p) * ((p - 1) * pair + single) for p in range(1, k + 1)) / min(k, n_rel)
        report = evaluate(_RandomModel(n_unseen, seed=5), train, test, cutoffs=(k,))
        # per-user AP is in [0, 1]; 3 sigma of the mean with a generous bound
        sigma = 0.5 / np.sqrt(n_users)
        assert abs(report.map[k] - e_ap) < 3 * sigma

    def test_mismatched_universes_raise(self):
        rng = np.random.default_rng(6)
        a = random_urm(rng, 5, 6)
        b = random_urm(rng, 5, 7)
        with pytest.raises(ValueError, match="universes"):
            evaluate(_RandomModel(6, 0), a, b)

    def test_users_without_test_items_excluded(self):
        import scipy.sparse as sp

        from ganmf.data import Urm

        train = Urm(sp.csr_matrix(np.array([[1.0, 0, 0], [1, 1, 0]])), ["a", "b"], ["x", "y", "z"])
        test = Urm(sp.csr_matrix(np.array([[0.0, 1, 0], [0, 0, 0]])), ["a", "b"], ["x", "y", "z"])
        report = evaluate(_OracleModel(test), train, test)
        assert report.n_users_evaluated == 1


class TestBuckets:
    def test_single_bucket_equals_global(self):
        rng = np.random.default_rng(7)
        urm = random_urm(rng, 20, 15, min_per_user=3)
        from ganmf.data import split

        bundle = split(urm, seed=3)
        model = _RandomModel(15, 8)
        full = evaluate(_RandomModel(15, 8), bundle.train, bundle.test)
        bucketed = evaluate_by_profile_length(
            _RandomModel(15, 8), bundle.train, bundle.test, bucket_edges=(1,)
        )
        assert bucketed.buckets[0].count == full.n_users_evaluated
        for k in (5, 20):
            assert bucketed.buckets[0].ndcg[k] == pytest.approx(full.ndcg[k])

    def test_counts_sum_to_evaluated(self):
        rng = np.random.default_rng(8)
        urm = random_urm(rng, 40, 30, min_per_user=2)
        from ganmf.data import split

        bundle = split(urm, seed=4)
        report = evaluate_by_profile_length(
            _RandomModel(30, 9), bundle.train, bundle.test, bucket_edges=(2, 5, 10)
        )
        assert sum(b.count for b in report.buckets) == report.n_users_evaluated

    def test_empty_bucket_reports_null(self):
        rng = np.random.default_rng(9)
        urm = random_urm(rng, 10, 12, min_per_user=2, max_per_user=4)
        from ganmf.data import split

        bundle = split(urm, seed=5)
        report = evaluate_by_profile_length(
            _RandomModel(12, 10), bundle.train, bundle.test, bucket_edges=(2, 500)
        )
        starved = report.buckets[1]
        assert starved.count == 0
        assert starved.ndcg[5] is None

    def test_cold_start_gap_for_itemknn(self):
        # Two dense blocks plus a handful of users with tiny profiles: the
        # starved bucket cannot beat the dense one for a neighborhood model.
        import scipy.sparse as sp

        from ganmf.data import Urm, split

        rng = np.random.default_rng(10)
        rows = []
        n_items = 40
        for u in range(60):
            block = (u % 2) * 20
            rows.append(block + np.sort(rng.choice(20, size=16, replace=False)))
        for u in range(60, 80):
            block = (u % 2) * 20
            rows.append(block + np.sort(rng.choice(20, size=3, replace=False)))
        indptr = np.concatenate([[0], np.cumsum([len(r) for r in rows])])
        mat = sp.csr_matrix(
            (np.ones(int(indptr[-1])), np.concatenate(rows), indptr), shape=(80, n_items)
        )
        urm = Urm(mat, [f"u{u:03d}" for u in range(80)], [f"i{i:03d}" for i in range(n_items)])
        bundle = split(urm, seed=6)
        model = ItemKNNCosine(neighborhood=10, shrink=0.0).fit(bundle.train)
        report = evaluate_by_profile_length(
            model, bundle.train, bundle.test, bucket_edges=(1, 10)
        )
        starved, dense = report.buckets[0], report.buckets[1]
        assert starved.count > 0 and dense.count > 0
        assert starved.map[5] <= dense.map[5]

    def test_bad_edges_raise(self):
        rng = np.random.default_rng(11)
        urm = random_urm(rng, 5, 6)
        with pytest.raises(ValueError):
            evaluate_by_profile_length(_RandomModel(6, 0), urm, urm, bucket_edges=(5, 2))


class TestSimilarityStats:
    def test_identical_profiles(self):
        profiles = np.tile(np.array([1.0, 2.0, 0.5]), (4, 1))
        s = similarity_stats(profiles)
        assert s.mean == pytest.approx(1.0)
        assert s.std == pytest.approx(0.0, abs=1e-12)
        assert s.n_pairs == 6

    def test_orthogonal_one_hot(self):
        s = similarity_stats(np.eye(5))
        assert s.mean == pytest.approx(0.0)

    def test_zero_norm_rows_count_as_zero(self):
        profiles = np.array([[1.0, 0.0], [0.0, 0.0], [1.0, 0.0]])
        s = similarity_stats(profiles)
        # pairs: (0,1)=0, (0,2)=1, (1,2)=0
        assert s.mean == pytest.approx(1.0 / 3.0)

    def test_sampled_path_is_seeded(self):
        rng = np.random.default_rng(12)
        profiles = rng.normal(size=(2000, 8))
        a = similarity_stats(profiles, sample=5000, seed=3)
        b = similarity_stats(profiles, sample=5000, seed=3)
        assert a.mean == b.mean and a.n_pairs == 5000

    def test_too_few_profiles(self):
        with pytest.raises(ValueError):
            similarity_stats(np.ones((1, 3)))
