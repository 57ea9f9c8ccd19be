import math

import numpy as np
import pytest

import reference_metrics as ref
from homf.metrics import (
    MetricReport,
    UserTestSet,
    aggregate,
    auc,
    average_precision_at_k,
    ndcg_at_k,
    precision_recall_at_k,
)


def user(rel, scores, items=None, uid=0):
    items = np.arange(len(rel)) if items is None else items
    return UserTestSet(uid, items, rel, scores)


def ranks_to_scores(n, relevant_ranks):
    """Scores placing items 0..n-1 at ranks given by position; relevance by rank."""
    scores = np.arange(n, 0, -1, dtype=float)
    rel = np.zeros(n)
    rel[[r - 1 for r in relevant_ranks]] = 1
    return rel, scores


class TestExamples:
    def test_precision_recall_hand(self):
        rel, s = ranks_to_scores(10, [1, 4, 9])
        p, r = precision_recall_at_k(user(rel, s), 5)
        assert p == pytest.approx(0.4, abs=1e-15)
        assert r == pytest.approx(2 / 3, abs=1e-15)

    def test_all_top_relevant(self):
        rel, s = ranks_to_scores(8, [1, 2, 3, 4])
        assert precision_recall_at_k(user(rel, s), 3) == pytest.approx((1.0, 0.75))

    def test_skipped(self):
        u = user(np.zeros(4), np.arange(4.0))
        assert precision_recall_at_k(u, 2) is None
        assert average_precision_at_k(u, 2) is None
        assert ndcg_at_k(u, 2) is None

    def test_ap(self):
        assert average_precision_at_k(user(*ranks_to_scores(3, [1])), 1) == 1.0
        assert average_precision_at_k(user(*ranks_to_scores(3, [2])), 2) == 0.5
        assert average_precision_at_k(user(*ranks_to_scores(6, [5])), 3) == 0.0
        assert average_precision_at_k(user(*ranks_to_scores(10, [1, 4, 9])), 5) == pytest.approx(0.5)

    def test_ndcg(self):
        assert ndcg_at_k(user(*ranks_to_scores(5, [1, 2])), 5) == pytest.approx(1.0)
        assert ndcg_at_k(user(*ranks_to_scores(2, [2])), 2) == pytest.approx(math.log(2) / math.log(3), abs=1e-15)

    def test_auc(self):
        assert auc([0.9, 0.8, 0.3, 0.1], [1, 0, 1, 0]) == 0.75
        assert auc([3, 2, 1], [1, 1, 0]) == 1.0
        assert auc([1, 1, 1, 1], [1, 0, 1, 0]) == 0.5

    def test_auc_single_class(self):
        with pytest.raises(ValueError):
            auc([0.1, 0.2], [1, 1])

    def test_tie_break_by_item(self):
        u = UserTestSet(0, [7, 3], [1, 0], [0.5, 0.5])
        assert precision_recall_at_k(u, 1) == (0.0, 0.0)

    def test_invalid_user(self):
        with pytest.raises(ValueError):
            UserTestSet(0, [], [], [])
        with pytest.raises(ValueError):
            UserTestSet(0, [1, 2], [1], [0.3, 0.2])


class TestAggregate:
    def test_single_user(self):
        rel, s = ranks_to_scores(10, [1, 4, 9])
        rep = aggregate([user(rel, s)], [5])
        assert rep.values["precision@5"] == pytest.approx(0.4)
        assert rep.values["map@5"] == pytest.approx(0.5)

    def test_two_users_mean(self):
        a = user(*ranks_to_scores(2, [1]), uid=0)
        b = user(*ranks_to_scores(2, [2]), uid=1)
        assert aggregate([a, b], [1]).values["precision@1"] == 0.5

    def test_skip_count(self):
        a = user(*ranks_to_scores(3, [1]), uid=0)
        b = user(np.zeros(3), np.arange(3.0), uid=1)
        rep = aggregate([a, b], [2])
        assert (rep.n_users, rep.n_skipped) == (1, 1)

    def test_all_skipped(self):
        with pytest.raises(ValueError):
            aggregate([user(np.zeros(3), np.arange(3.0))], [1])

    def test_report_serialization(self):
        rep = aggregate([user(*ranks_to_scores(10, [1, 4, 9]))], [5, 10])
        rep.metadata = {"seed": "0"}
        back = MetricReport.from_json(rep.to_json())
        assert back.values == rep.values and back.metadata == rep.metadata
        lines = rep.to_text().splitlines()
        assert "precision 5 0.4000000000" in lines
        assert all(0 <= v <= 1 for v in rep.values.values())


def random_user(rng, uid=0):
    n = int(rng.integers(1, 40))
    items = rng.permutation(1000)[:n]
    rel = (rng.random(n) < rng.uniform(0.05, 0.6)).astype(float)
    # coarse scores make ties common
    scores = np.round(rng.normal(size=n), int(rng.integers(0, 3)))
    return UserTestSet(uid, items, rel, scores)


def test_against_reference(rng):
    for t in range(200):
        u = random_user(rng, t)
        args = (u.items.tolist(), u.relevance.tolist(), u.scores.tolist())
        for K in (1, 3, 5, 10, 50):
            got = precision_recall_at_k(u, K)
            exp = ref.precision_recall(*args, K)
            if exp is None:
                assert got is None
                continue
            assert abs(got[0] - exp[0]) <= 1e-12 and abs(got[1] - exp[1]) <= 1e-12
            assert abs(average_precision_at_k(u, K) - ref.average_precision(*args, K)) <= 1e-12
            assert abs(ndcg_at_k(u, K) - ref.ndcg(*args, K)) <= 1e-12
        if 0 < u.n_relevant < len(u.items):
            assert abs(auc(u.scores, u.relevance) - ref.auc(u.scores.tolist(), u.relevance.tolist())) <= 1e-12


class TestProperties:
    def test_monotone_transform(self, rng):
        for _ in range(50):
            u = random_user(rng)
            v = UserTestSet(0, u.items, u.relevance, np.exp(3 * u.scores) + 7)
            for K in (1, 5, 20):
                assert precision_recall_at_k(u, K) == precision_recall_at_k(v, K)
                assert average_precision_at_k(u, K) == average_precision_at_k(v, K)
                assert ndcg_at_k(u, K) == ndcg_at_k(v, K)
            if 0 < u.n_relevant < len(u.items):
                assert auc(u.scores, u.relevance) == auc(v.scores, v.relevance)

    def test_flipped_labels(self, rng):
        for _ in range(50):
            s = rng.normal(size=30)
            labels = np.zeros(30, dtype=bool)
            labels[:10] = True
            rng.shuffle(labels)
            assert auc(s, labels) + auc(s, ~labels) == pytest.approx(1.0, abs=1e-15)

    def test_permutation_invariance(self, rng):
        for _ in range(50):
            u = random_user(rng)
            p = rng.permutation(len(u.items))
            v = UserTestSet(0, u.items[p], u.relevance[p], u.scores[p])
            for K in (1, 4, 15):
                assert precision_recall_at_k(u, K) == precision_recall_at_k(v, K)
                assert average_precision_at_k(u, K) == average_precision_at_k(v, K)
                assert ndcg_at_k(u, K) == ndcg_at_k(v, K)

    def test_bounds(self, rng):
        for _ in range(100):
            u = random_user(rng)
            if u.n_relevant == 0:
                continue
            prev_recall = 0.0
            for K in range(1, 45):
                p, r = precision_recall_at_k(u, K)
                assert p * K <= u.n_relevant + 1e-12
                assert r >= prev_recall
                prev_recall = r
                assert 0 <= ndcg_at_k(u, K) <= 1 + 1e-12
                assert 0 <= average_precision_at_k(u, K) <= 1 + 1e-12
