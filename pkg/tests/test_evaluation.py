import math
from itertools import combinations

import numpy as np
import pandas as pd
import pytest

from dmr_rec.config import rng_for
from dmr_rec.data import InteractionLog
from dmr_rec.errors import DataError
from dmr_rec.evaluation import (
    EvalReport,
    RankedList,
    assignment_purity,
    auc,
    build_candidate_pools,
    diversity_at_n,
    evaluate,
    evaluate_rankings,
    f1_at_n,
    precision_at_n,
    recall_at_n,
    relevant_items,
    report_frame,
)
from dmr_rec.synthetic import generate


def ranked(items, user="u"):
    return RankedList(user=user, items=tuple(items), scores=tuple(float(len(items) - i) for i in range(len(items))))


def brute_auc(pos, neg):
    wins = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg)
    return wins / (len(pos) * len(neg))


class TestRankedList:
    def test_ties_broken_by_item(self):
        lst = RankedList.from_scores("u", ["c", "a", "b"], [1.0, 2.0, 1.0])
        assert lst.items == ("a", "b", "c")

    def test_rejects_duplicates(self):
        with pytest.raises(ValueError):
            RankedList("u", ("a", "a"), (2.0, 1.0))

    def test_rejects_increasing_scores(self):
        with pytest.raises(ValueError):
            RankedList("u", ("a", "b"), (1.0, 2.0))


class TestMetrics:
    def test_precision_and_recall(self):
        lst = ranked(["a", "x", "b", "y", "c", "d"])
        relevant = {"a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k", "l"}
        assert precision_at_n(lst, relevant, 5) == pytest.approx(0.6)
        assert recall_at_n(lst, relevant, 3) == pytest.approx(2 / 12)
        assert recall_at_n(ranked(["a", "x", "y"]), {"a", "b", "c", "d"}, 3) == pytest.approx(0.25)

    def test_precision_divides_by_n_for_short_lists(self):
        assert precision_at_n(ranked(["a", "b"]), {"a", "b"}, 10) == pytest.approx(0.2)

    def test_f1(self):
        assert f1_at_n(0.6, 0.25) == pytest.approx(0.3529, abs=1e-4)
        assert f1_at_n(0.323, 0.478) == pytest.approx(0.385, abs=1e-3)
        assert f1_at_n(0.0, 0.0) == 0.0

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            precision_at_n(ranked(["a"]), {"a"}, 0)
        with pytest.raises(ValueError):
            precision_at_n(ranked([]), {"a"}, 3)
        with pytest.raises(ValueError):
            recall_at_n(ranked(["a"]), set(), 3)

    def test_auc_example(self):
        assert auc([0.8, 0.4], [0.6, 0.2]) == pytest.approx(0.75)

    def test_auc_ties_count_half(self):
        assert auc([0.5], [0.5]) == pytest.approx(0.5)

    def test_auc_needs_both_classes(self):
        assert math.isnan(auc([0.1, 0.2], []))
        assert math.isnan(auc([], [0.3]))

    def test_auc_matches_pair_count(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            pos = rng.integers(0, 5, rng.integers(1, 8)).astype(float)
            neg = rng.integers(0, 5, rng.integers(1, 8)).astype(float)
            assert auc(pos, neg) == pytest.approx(brute_auc(pos, neg), abs=1e-12)

    def test_auc_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(1)
        pos, neg = rng.normal(size=20), rng.normal(size=30)
        assert auc(pos, neg) == pytest.approx(auc(np.exp(3 * pos) + 1, np.exp(3 * neg) + 1))

    def test_random_scores_near_half(self):
        rng = np.random.default_rng(2)
        assert auc(rng.random(5000), rng.random(5000)) == pytest.approx(0.5, abs=0.02)

    def test_diversity_example(self):
        lst = ranked(["a", "b", "c", "d"])
        assert diversity_at_n(lst, {"a": 1, "b": 1, "c": 2, "d": 3}, 4) == pytest.approx(5 / 6)

    def test_diversity_uses_available_items(self):
        lst = ranked(["a", "b", "c"])
        assert diversity_at_n(lst, {"a": 1, "b": 2, "c": 2}, 10) == pytest.approx(2 / 3)

    def test_diversity_matches_pairs(self):
        rng = np.random.default_rng(3)
        items = [f"i{k}" for k in range(12)]
        categories = {item: int(rng.integers(0, 3)) for item in items}
        lst = ranked(items)
        for n in range(2, 13):
            pairs = list(combinations(items[:n], 2))
            expected = sum(categories[a] != categories[b] for a, b in pairs) / len(pairs)
            assert diversity_at_n(lst, categories, n) == pytest.approx(expected)

    def test_diversity_errors(self):
        with pytest.raises(ValueError):
            diversity_at_n(ranked(["a", "b"]), {"a": 1, "b": 2}, 1)
        with pytest.raises(ValueError):
            diversity_at_n(ranked(["a"]), {"a": 1}, 5)
        with pytest.raises(DataError):
            diversity_at_n(ranked(["a", "b"]), {"a": 1}, 2)


class TestAggregation:
    def test_macro_average_skips_users_without_hits(self):
        rankings = {
            "u1": ranked(["a", "b", "c", "d"], "u1"),
            "u2": ranked(["a", "b", "c", "d"], "u2"),
            "u3": ranked(["a", "b", "c", "d"], "u3"),
        }
        relevant = {"u1": {"a"}, "u2": {"c", "d"}, "u3": set()}
        report = evaluate_rankings(rankings, relevant, n=2, cutoffs=(2,))
        assert report.users_evaluated == 2
        assert report.precision == pytest.approx((0.5 + 0.0) / 2)
        assert report.recall == pytest.approx((1.0 + 0.0) / 2)
        assert report.f1 == pytest.approx(f1_at_n(0.25, 0.5))
        assert report.auc == pytest.approx((1.0 + 0.0) / 2)
        assert math.isnan(report.diversity)

    def test_diversity_cutoffs(self):
        rankings = {"u": ranked(["a", "b", "c", "d"])}
        categories = {"a": 1, "b": 1, "c": 2, "d": 3}
        report = evaluate_rankings(rankings, {"u": {"a"}}, n=2, categories=categories, cutoffs=(2, 4))
        assert report.diversity == pytest.approx(0.0)
        assert report.diversity_at == {2: pytest.approx(0.0), 4: pytest.approx(5 / 6)}

    def test_report_frame(self):
        report = EvalReport(0.1, 0.2, 0.13, 0.7, 0.5, n=10, users_evaluated=3, diversity_at={10: 0.5})
        frame = report_frame([report, report], neighbors=[5, 20])
        assert list(frame.columns) == [
            "label", "neighbors", "n", "precision", "recall", "f1", "auc", "diversity", "diversity@10", "users"
        ]
        assert frame["neighbors"].tolist() == [5, 20]


class TestEndToEnd:
    def test_candidate_pools(self, world_inputs, tiny_world):
        split, _, params = world_inputs(tiny_world)
        pools = build_candidate_pools(split, params.item_ids, 15, rng_for(1, "eval-pool"))
        assert set(pools) == set(split.test.histories)
        for user, pool in pools.items():
            test_items = list(dict.fromkeys(x.item for x in split.test.histories[user].interactions))
            assert pool[: len(test_items)] == test_items
            extra = pool[len(test_items):]
            assert len(extra) == 15
            assert not set(extra) & (split.train.histories[user].items() | set(test_items))
            assert len(set(pool)) == len(pool)
        again = build_candidate_pools(split, params.item_ids, 15, rng_for(1, "eval-pool"))
        assert again == pools

    def test_evaluate_planted_world(self, world_inputs, tiny_world):
        split, index, params = world_inputs(tiny_world)
        report = evaluate(params, split, index, n=10, candidate_pool=20, cutoffs=(10,))
        relevant = relevant_items(split.test)
        assert report.users_evaluated == sum(1 for hits in relevant.values() if hits)
        for value in (report.precision, report.recall, report.auc, report.diversity):
            assert 0.0 <= value <= 1.0
        assert set(report.diversity_at) == {10}

    def test_evaluate_is_deterministic(self, world_inputs, tiny_world):
        split, index, params = world_inputs(tiny_world)
        a = evaluate(params, split, index, n=5, candidate_pool=10, seed=3, cutoffs=(5,))
        b = evaluate(params, split, index, n=5, candidate_pool=10, seed=3, cutoffs=(5,))
        assert a == b

    def test_assignment_purity_bounds(self, world_inputs, tiny_world):
        _, _, params = world_inputs(tiny_world)
        log, truth = generate(tiny_world)
        purity = assignment_purity(params, log, truth)
        assert 0.0 < purity <= 1.0

    def test_purity_of_single_trend_model_is_majority_share(self, world_inputs, tiny_world):
        _, _, params = world_inputs(tiny_world, trends=1)
        log, truth = generate(tiny_world)
        clicked = truth.merge(
            log.frame()[["user", "item", "timestamp", "click"]], on=["user", "item", "timestamp"]
        )
        clicked = clicked[clicked["click"] == 1]
        per_user = clicked.groupby("user")["trend"].agg(lambda s: s.value_counts().iloc[0]).sum()
        assert assignment_purity(params, log, truth) == pytest.approx(per_user / len(clicked))

    def test_purity_without_clicks(self, make_params):
        params = make_params(0)
        empty = pd.DataFrame(columns=["user", "item", "timestamp", "trend"])
        assert math.isnan(assignment_purity(params, InteractionLog(histories={}), empty))


class TestBruteForce:
    @pytest.mark.parametrize("seed", range(200))
    def test_metrics_match_direct_computation(self, seed):
        rng = np.random.default_rng(seed)
        size = int(rng.integers(2, 15))
        items = [f"i{k:02d}" for k in range(size)]
        scores = rng.integers(0, 6, size).astype(float)
        lst = RankedList.from_scores("u", items, scores)
        relevant = {item for item in items if rng.random() < 0.4} or {items[0]}
        categories = {item: int(rng.integers(0, 3)) for item in items}
        n = int(rng.integers(2, size + 3))

        top = lst.items[:n]
        hits = sum(item in relevant for item in top)
        assert abs(precision_at_n(lst, relevant, n) - hits / n) < 1e-12
        assert abs(recall_at_n(lst, relevant, n) - hits / len(relevant)) < 1e-12
        pairs = list(combinations(top, 2))
        expected_div = sum(categories[a] != categories[b] for a, b in pairs) / len(pairs)
        assert abs(diversity_at_n(lst, categories, n) - expected_div) < 1e-12

        pos = [s for item, s in zip(lst.items, lst.scores) if item in relevant]
        neg = [s for item, s in zip(lst.items, lst.scores) if item not in relevant]
        if pos and neg:
            assert abs(auc(pos, neg) - brute_auc(pos, neg)) < 1e-12
        else:
            assert math.isnan(auc(pos, neg))
