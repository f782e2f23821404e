import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pacckit.errors import ConfigError, DomainError, MetricUndefinedError, ShapeError
from pacckit.metrics import (
    auc,
    counterfactual_weights,
    evaluate,
    mrr,
    pacc_weights,
    pauc,
    weighted_mrr,
)
from pacckit.models import make_model
from pacckit.rng import RngState
from pacckit.simlog import LogTable, PropensityTable

from conftest import tiny_config


def pairwise_auc_oracle(scores, labels):
    """O(n^2) definition: P(random positive outranks random negative),
    ties counting one half."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return (wins + 0.5 * ties) / (len(pos) * len(neg))


def mrr_enumeration_oracle(scores, labels, query_ids, item_ids):
    """Per-query enumeration of the first positive's rank."""
    total, count = 0.0, 0
    for q in np.unique(query_ids):
        mask = query_ids == q
        rows = sorted(
            zip(scores[mask], item_ids[mask], labels[mask]),
            key=lambda r: (-r[0], r[1]),
        )
        for rank, (_, _, label) in enumerate(rows, start=1):
            if label == 1:
                total += 1.0 / rank
                count += 1
                break
    return total / count


def weighted_mrr_enumeration_oracle(scores, labels, query_ids, item_ids, weights):
    num, den = 0.0, 0.0
    for q in np.unique(query_ids):
        mask = query_ids == q
        rows = sorted(
            zip(scores[mask], item_ids[mask], labels[mask], weights[mask]),
            key=lambda r: (-r[0], r[1]),
        )
        for rank, (_, _, label, w) in enumerate(rows, start=1):
            if label == 1:
                num += w / rank
                den += w
    return num / den


def random_instance(rng, n=None, n_ties=True):
    n = n or int(rng.integers(10, 501))
    if n_ties:
        scores = rng.integers(0, max(2, n // 3), n).astype(float)
    else:
        scores = rng.standard_normal(n)
    labels = (rng.random(n) < 0.3).astype(int)
    if labels.sum() == 0:
        labels[0] = 1
    if labels.sum() == n:
        labels[0] = 0
    return scores, labels


class TestAuc:
    def test_perfect_separation(self):
        assert auc([1.0, 2.0, 3.0, 4.0], [0, 0, 1, 1]) == 1.0

    def test_all_ties(self):
        assert auc([1.0, 1.0, 1.0, 1.0], [0, 1, 0, 1]) == 0.5

    def test_matches_pairwise_oracle_on_200_random(self, rng):
        scores, labels = random_instance(rng, n=200)
        assert auc(scores, labels) == pairwise_auc_oracle(scores, labels)

    def test_many_random_instances_exact(self, rng):
        for _ in range(30):
            scores, labels = random_instance(rng)
            assert auc(scores, labels) == pairwise_auc_oracle(scores, labels)

    def test_single_class_undefined(self):
        with pytest.raises(MetricUndefinedError):
            auc([1.0, 2.0], [1, 1])

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=20, deadline=None)
    def test_monotone_transform_invariance(self, seed):
        gen = np.random.default_rng(seed)
        scores, labels = random_instance(gen, n=60, n_ties=True)
        base = auc(scores, labels)
        assert auc(np.exp(scores / 10.0), labels) == base
        assert auc(3.0 * scores + 7.0, labels) == base


class TestPauc:
    def test_single_position_equals_auc(self, rng):
        scores, labels = random_instance(rng, n=80)
        positions = np.ones(80, dtype=int)
        assert pauc(scores, labels, positions) == auc(scores, labels)

    def test_position_only_scores_give_half(self, rng):
        # scores constant within position: every bucket is all ties
        positions = np.repeat(np.arange(1, 6), 40)
        scores = 1.0 / positions
        labels = (rng.random(200) < (0.5 / positions)).astype(int)
        labels[:2] = [1, 0]
        assert pauc(scores, labels, positions) == 0.5
        assert auc(scores, labels) != 0.5

    def test_two_hand_buckets(self):
        # bucket 1: scores (3,2,1), labels (1,0,0) -> auc 1.0, pairs 2
        # bucket 2: scores (1,2,3), labels (1,1,0) -> auc 0.0, pairs 2
        scores = np.array([3.0, 2.0, 1.0, 1.0, 2.0, 3.0])
        labels = np.array([1, 0, 0, 1, 1, 0])
        positions = np.array([1, 1, 1, 2, 2, 2])
        assert pauc(scores, labels, positions) == 0.5

    def test_buckets_missing_a_class_are_skipped(self):
        scores = np.array([1.0, 2.0, 5.0, 4.0])
        labels = np.array([1, 1, 1, 0])
        positions = np.array([1, 1, 2, 2])
        assert pauc(scores, labels, positions) == 1.0

    def test_no_valid_bucket(self):
        with pytest.raises(MetricUndefinedError):
            pauc([1.0, 2.0], [1, 1], [1, 2])


class TestMrr:
    def test_top_positive_everywhere(self):
        scores = np.array([2.0, 1.0, 2.0, 1.0])
        labels = np.array([1, 0, 1, 0])
        qid = np.array([0, 0, 1, 1])
        iid = np.arange(4)
        assert mrr(scores, labels, qid, iid) == 1.0

    def test_positive_ranked_fourth(self):
        scores = np.array([4.0, 3.0, 2.0, 1.0])
        labels = np.array([0, 0, 0, 1])
        assert mrr(scores, labels, np.zeros(4), np.arange(4)) == 0.25

    def test_queries_without_positives_skipped(self):
        scores = np.array([1.0, 2.0, 3.0, 4.0])
        labels = np.array([1, 0, 0, 0])
        qid = np.array([0, 0, 1, 1])
        assert mrr(scores, labels, qid, np.arange(4)) == 0.5

    def test_ties_break_by_item_id(self):
        scores = np.array([1.0, 1.0, 1.0])
        labels = np.array([0, 1, 0])
        assert mrr(scores, labels, np.zeros(3), np.array([5, 2, 9])) == 1.0
        assert mrr(scores, labels, np.zeros(3), np.array([1, 2, 9])) == 0.5

    def test_matches_enumeration_on_random_queries(self, rng):
        for _ in range(50):
            n_q = int(rng.integers(3, 12))
            sizes = rng.integers(2, 8, n_q)
            qid = np.repeat(np.arange(n_q), sizes)
            n = len(qid)
            iid = np.arange(n)
            scores = rng.integers(0, 5, n).astype(float)
            labels = (rng.random(n) < 0.4).astype(int)
            if labels.sum() == 0:
                labels[0] = 1
            assert np.isclose(
                mrr(scores, labels, qid, iid),
                mrr_enumeration_oracle(scores, labels, qid, iid),
                atol=1e-14,
            )

    def test_rank_by_logged_position(self):
        scores = np.array([1.0, 9.0])
        labels = np.array([1, 0])
        positions = np.array([1, 2])
        assert mrr(scores, labels, np.zeros(2), np.arange(2)) == 0.5
        assert mrr(scores, labels, np.zeros(2), np.arange(2),
                   positions=positions, rank_by="position") == 1.0

    def test_unknown_rank_source(self):
        with pytest.raises(ConfigError):
            mrr([1.0], [1], [0], [0], rank_by="alphabetical")


class TestWeightedMrr:
    def test_uniform_weights_equal_mean_reciprocal_rank(self, rng):
        scores = np.array([3.0, 2.0, 1.0, 3.0, 2.0, 1.0])
        labels = np.array([1, 0, 1, 0, 1, 0])
        qid = np.array([0, 0, 0, 1, 1, 1])
        got = weighted_mrr(scores, labels, qid, np.arange(6), np.ones(6))
        assert got == np.mean([1.0, 1.0 / 3.0, 0.5])

    def test_single_positive_ignores_weight(self):
        scores = np.array([2.0, 1.0])
        labels = np.array([0, 1])
        for w in (0.5, 10.0):
            got = weighted_mrr(scores, labels, np.zeros(2), np.arange(2),
                               np.full(2, w))
            assert got == 0.5

    def test_two_positives_weighted_arithmetic(self):
        # weights (1, 3) at ranks (1, 2): (1*1 + 3*0.5) / 4 = 0.625
        scores = np.array([5.0, 4.0, 3.0])
        labels = np.array([1, 1, 0])
        weights = np.array([1.0, 3.0, 1.0])
        got = weighted_mrr(scores, labels, np.zeros(3), np.arange(3), weights)
        assert got == 0.625

    def test_matches_enumeration(self, rng):
        for _ in range(50):
            n_q = int(rng.integers(2, 10))
            sizes = rng.integers(2, 7, n_q)
            qid = np.repeat(np.arange(n_q), sizes)
            n = len(qid)
            scores = rng.standard_normal(n)
            labels = (rng.random(n) < 0.4).astype(int)
            if labels.sum() == 0:
                labels[0] = 1
            weights = rng.uniform(0.5, 4.0, n)
            assert np.isclose(
                weighted_mrr(scores, labels, qid, np.arange(n), weights),
                weighted_mrr_enumeration_oracle(scores, labels, qid, np.arange(n), weights),
                atol=1e-12,
            )


class TestWeights:
    def test_position_one_weight_is_one(self):
        cfg = tiny_config()
        model = make_model("pacc", cfg, RngState(3))
        w = pacc_weights(np.array([1, 1]), model)
        assert np.array_equal(w, [1.0, 1.0])

    def test_ratio_weights(self):
        cfg = tiny_config(p_max=2)
        model = make_model("pacc", cfg, RngState(3))
        # force the learned table to (0.8, 0.4): weight at position 2 = 2.0
        model.position_head.weight[...] = [[np.log(0.8 / 0.2), np.log(0.4 / 0.6)]]
        model.position_head.bias[...] = 0.0
        table = model.propensity_table().probabilities
        assert np.allclose(table, [0.8, 0.4], atol=1e-12)
        w = pacc_weights(np.array([1, 2]), model)
        assert np.allclose(w, [1.0, 2.0], atol=1e-12)

    def test_counterfactual_on_pacc_reproduces_table_weights(self):
        cfg = tiny_config()
        model = make_model("pacc", cfg, RngState(7))
        gen = RngState(1).substream("d").generator()
        n = 40
        table = LogTable(
            np.repeat(np.arange(8), 5),
            np.arange(n),
            (np.arange(n) % cfg.p_max) + 1,
            np.zeros(n, dtype=int),
            np.zeros(n, dtype=int),
            gen.standard_normal((n, cfg.feature_dim)),
        )
        expected = pacc_weights(table.position, model)
        got, clamped = counterfactual_weights(model, table, task="ctr")
        assert not clamped.any()
        assert np.allclose(got, expected, atol=1e-10)

    def test_position_invariant_model_gets_unit_weights(self):
        cfg = tiny_config()
        model = make_model("naive", cfg, RngState(7))
        gen = RngState(2).substream("d").generator()
        n = 20
        table = LogTable(
            np.repeat(np.arange(4), 5),
            np.arange(n),
            (np.arange(n) % cfg.p_max) + 1,
            np.zeros(n, dtype=int),
            np.zeros(n, dtype=int),
            gen.standard_normal((n, cfg.feature_dim)),
        )
        w, clamped = counterfactual_weights(model, table, task="cvr")
        assert np.array_equal(w, np.ones(n))
        assert not clamped.any()


class TestEvaluate:
    def _table(self, cfg, n=400, seed=5):
        gen = RngState(seed).substream("t").generator()
        return LogTable(
            np.repeat(np.arange(n // 5), 5),
            np.arange(n),
            np.tile(np.arange(1, 6), n // 5),
            (gen.random(n) < 0.3).astype(int),
            np.zeros(n, dtype=int),
            gen.standard_normal((n, cfg.feature_dim)),
        )

    def test_report_structure(self):
        cfg = tiny_config(p_max=5)
        model = make_model("pacc", cfg, RngState(2))
        table = self._table(cfg)
        # give conversions to some clicked rows so CVR metrics are defined
        conv = table.conversion.copy()
        conv[table.click == 1] = (np.arange(int(table.click.sum())) % 3 == 0).astype(int)
        table.conversion = conv
        report = evaluate(model, table)
        for task in ("ctr", "cvr"):
            tm = getattr(report, task)
            for v in (tm.auc, tm.pauc, tm.mrr, tm.weighted_mrr):
                assert 0.0 <= v <= 1.0
        assert report.n_queries == 80
        assert report.n_click_pos == int(table.click.sum())
        rows = report.rows("pacc")
        assert len(rows) == 8
        text = report.format_table("pacc")
        assert "pacc" in text and "wMRR" in text

    def test_true_propensity_weighting(self):
        cfg = tiny_config(p_max=5)
        model = make_model("naive", cfg, RngState(2))
        table = self._table(cfg)
        conv = table.conversion.copy()
        conv[table.click == 1] = 1
        table.conversion = conv
        theta = PropensityTable(1.0 / np.arange(1.0, 6.0))
        rep_own = evaluate(model, table)
        rep_true = evaluate(model, table, propensity=theta)
        # same rankings, different weights
        assert rep_own.ctr.mrr == rep_true.ctr.mrr
        assert rep_own.ctr.weighted_mrr != rep_true.ctr.weighted_mrr


class TestMonotoneInvariance:
    def test_mrr_family_invariant_under_increasing_transforms(self, rng):
        n_q = 8
        qid = np.repeat(np.arange(n_q), 6)
        n = len(qid)
        scores = rng.integers(0, 7, n).astype(float)
        labels = (rng.random(n) < 0.35).astype(int)
        labels[0] = 1
        weights = rng.uniform(0.5, 3.0, n)
        positions = np.tile(np.arange(1, 7), n_q)
        iid = np.arange(n)
        for transform in (lambda s: np.exp(s / 5.0), lambda s: 2.0 * s + 1.0):
            t = transform(scores)
            assert mrr(t, labels, qid, iid) == mrr(scores, labels, qid, iid)
            assert weighted_mrr(t, labels, qid, iid, weights) == \
                weighted_mrr(scores, labels, qid, iid, weights)
            assert pauc(t, labels, positions) == pauc(scores, labels, positions)


class TestWeightClamping:
    def test_vanishing_denominator_is_clamped_and_flagged(self):
        from pacckit.metrics import WEIGHT_DENOM_FLOOR, counterfactual_weights

        cfg = tiny_config()
        model = make_model("pacc", cfg, RngState(3))
        # saturate both factors negative: p_cvr collapses to ~1e-14 at the
        # logged position
        model.position_head.weight[...] = 0.0
        model.position_head.bias[...] = -1000.0
        model.ctr_head.weight[...] = 0.0
        model.ctr_head.bias[...] = -1000.0
        gen = RngState(4).substream("x").generator()
        n = 10
        table = LogTable(
            np.zeros(n, dtype=int), np.arange(n), np.full(n, 2, dtype=int),
            np.zeros(n, dtype=int), np.zeros(n, dtype=int),
            gen.standard_normal((n, cfg.feature_dim)),
        )
        w, clamped = counterfactual_weights(model, table, task="cvr")
        assert clamped.all()
        assert np.all(np.isfinite(w))
        pred = model.predict(table.features, table.position)
        assert np.all(pred.p_cvr < WEIGHT_DENOM_FLOOR)


class TestScoredExamples:
    def test_bundle_validation(self, rng):
        from pacckit.metrics import ScoredExamples

        n = 10
        bundle = ScoredExamples(
            query_id=np.zeros(n, dtype=int),
            position=np.arange(1, n + 1),
            score=rng.standard_normal(n),
            label=(rng.random(n) < 0.5).astype(int),
            weight=np.ones(n),
            item_id=np.arange(n),
        )
        assert len(bundle.score) == n
        with pytest.raises(DomainError):
            ScoredExamples(
                query_id=np.zeros(n, dtype=int),
                position=np.arange(1, n + 1),
                score=rng.standard_normal(n),
                label=np.zeros(n, dtype=int),
                weight=np.zeros(n),  # weights must be positive
                item_id=np.arange(n),
            )
        with pytest.raises(ShapeError):
            ScoredExamples(
                query_id=np.zeros(3, dtype=int),
                position=np.arange(1, n + 1),
                score=rng.standard_normal(n),
                label=np.zeros(n, dtype=int),
                weight=np.ones(n),
                item_id=np.arange(n),
            )
