import math

import numpy as np
import pytest
from scipy.stats import norm

from viewsphere.goldeval import (
    EvalEntry,
    GoldDistribution,
    RankedList,
    RetrievalQuery,
    evaluate_model,
    gold_distribution,
    kl_divergence,
    normalize_map,
    precision_at_k,
    recall_at_k,
)
from viewsphere.scorer import OracleProfile, Query, compute_score_map, make_oracle


class TestGoldDistribution:
    def test_sums_to_one(self, sphere10, hex_cell_far_from_pentagons):
        gold = gold_distribution(sphere10, hex_cell_far_from_pentagons)
        assert abs(gold.weights.sum() - 1.0) <= 1e-12

    def test_support_is_37_cells_at_pentagon_free_gold(self, sphere10, hex_cell_far_from_pentagons):
        gold = gold_distribution(sphere10, hex_cell_far_from_pentagons)
        assert len(gold.support) == 1 + 6 + 12 + 18

    def test_support_confined_to_three_rings(self, sphere10, hex_cell_far_from_pentagons):
        origin = hex_cell_far_from_pentagons
        gold = gold_distribution(sphere10, origin)
        assert set(gold.support.tolist()) == sphere10.disk(origin, 3)

    def test_peak_weight_matches_closed_form(self, sphere10, hex_cell_far_from_pentagons):
        # independent density evaluation via scipy
        gold = gold_distribution(sphere10, hex_cell_far_from_pentagons, sigma=1.0)
        phi = norm.pdf
        expected = phi(0) / (phi(0) + 6 * phi(1) + 12 * phi(2) + 18 * phi(3))
        assert gold.weights[hex_cell_far_from_pentagons] == pytest.approx(expected, abs=1e-12)

    def test_weights_strictly_decrease_across_rings(self, sphere10, hex_cell_far_from_pentagons):
        origin = hex_cell_far_from_pentagons
        gold = gold_distribution(sphere10, origin, sigma=1.3)
        ring_values = []
        for k in range(4):
            cells = sorted(sphere10.ring(origin, k))
            vals = {float(gold.weights[c]) for c in cells}
            assert len(vals) == 1
            ring_values.append(vals.pop())
        assert all(a > b for a, b in zip(ring_values, ring_values[1:]))

    def test_tiny_sigma_concentrates_on_gold(self, sphere10, hex_cell_far_from_pentagons):
        gold = gold_distribution(sphere10, hex_cell_far_from_pentagons, sigma=1e-3)
        assert gold.weights[hex_cell_far_from_pentagons] == pytest.approx(1.0, abs=1e-12)

    def test_invalid_sigma_rejected(self, sphere10):
        with pytest.raises(ValueError):
            gold_distribution(sphere10, 0, sigma=0.0)
        with pytest.raises(ValueError):
            gold_distribution(sphere10, 0, sigma=-1.0)

    def test_invariant_under_far_relabeling(self, sphere10):
        # weights depend only on ring structure around gold; two distant gold
        # cells with pentagon-free neighborhoods have identical weight multisets
        cells = []
        for cell in sphere10.cells:
            if cell.is_pentagon:
                continue
            if not any(sphere10.cells[c].is_pentagon for c in sphere10.disk(cell.id, 3)):
                cells.append(cell.id)
            if len(cells) == 2:
                break
        a = gold_distribution(sphere10, cells[0])
        b = gold_distribution(sphere10, cells[1])
        assert np.allclose(sorted(a.weights[a.support]), sorted(b.weights[b.support]))


class TestNormalizeMap:
    def test_constant_map_becomes_uniform(self):
        p = normalize_map(np.full(10, 3.7))
        assert np.allclose(p, 0.1)
        assert p.sum() == pytest.approx(1.0, abs=1e-12)

    def test_one_hot_limit(self):
        scores = np.zeros(50)
        scores[7] = 1.0
        p = normalize_map(scores, epsilon=1e-15)
        assert p[7] == pytest.approx(1.0, abs=1e-10)

    def test_strictly_positive_and_matches_two_pass_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            s = rng.standard_normal(64) * rng.uniform(0.1, 10)
            p = normalize_map(s, epsilon=1e-9)
            assert np.all(p > 0)
            # independent two-pass recomputation
            lo = min(float(v) for v in s)
            shifted = [float(v) - lo + 1e-9 for v in s]
            total = sum(shifted)
            expected = [v / total for v in shifted]
            assert np.allclose(p, expected, atol=1e-15)


class TestKLDivergence:
    def test_gold_vs_itself_is_tiny(self, sphere10, hex_cell_far_from_pentagons):
        gold = gold_distribution(sphere10, hex_cell_far_from_pentagons)
        predicted = normalize_map(gold.weights)
        assert kl_divergence(gold, predicted) < 1e-6

    def test_uniform_prediction_matches_analytic_value(self, sphere10, hex_cell_far_from_pentagons):
        gold = gold_distribution(sphere10, hex_cell_far_from_pentagons)
        n = sphere10.n_cells
        uniform = np.full(n, 1.0 / n)
        g = gold.weights[gold.support]
        expected = float(np.sum(g * np.log(g * n)))
        assert kl_divergence(gold, uniform) == pytest.approx(expected, abs=1e-9)

    def test_two_cell_toy_value(self):
        gold = GoldDistribution(0, 1.0, np.array([0.75, 0.25]))
        predicted = np.array([0.5, 0.5])
        expected = 0.75 * math.log(1.5) + 0.25 * math.log(0.5)
        assert kl_divergence(gold, predicted) == pytest.approx(expected, abs=1e-15)

    def test_gibbs_non_negative_on_random_pairs(self, sphere2):
        rng = np.random.default_rng(77)
        n = sphere2.n_cells
        for _ in range(200):
            gold = gold_distribution(
                sphere2, int(rng.integers(n)), sigma=float(rng.uniform(0.3, 3.0))
            )
            predicted = normalize_map(rng.standard_normal(n))
            assert kl_divergence(gold, predicted) >= -1e-12

    def test_dimension_mismatch_rejected(self, sphere2):
        gold = gold_distribution(sphere2, 0)
        with pytest.raises(ValueError):
            kl_divergence(gold, np.full(7, 1 / 7))

    def test_nonpositive_prediction_on_support_rejected(self, sphere2):
        gold = gold_distribution(sphere2, 0)
        bad = np.full(sphere2.n_cells, 1.0 / sphere2.n_cells)
        bad[0] = 0.0
        with pytest.raises(ValueError):
            kl_divergence(gold, bad)


class TestRankedList:
    def test_from_scores_sorts_descending_with_stable_ties(self):
        ranking = RankedList.from_scores([("b", 0.5), ("a", 0.5), ("c", 0.9)])
        assert ranking.items == ("c", "a", "b")

    def test_rejects_increasing_scores(self):
        with pytest.raises(ValueError):
            RankedList(("a", "b"), (0.1, 0.9))


class TestPrecisionRecall:
    @pytest.fixture
    def ranking(self):
        return RankedList(("a", "b", "c", "d", "e"), (5.0, 4.0, 3.0, 2.0, 1.0))

    def test_hand_counted_fixtures(self, ranking):
        relevant = {"a", "c"}
        assert precision_at_k(ranking, relevant, 1) == 1.0
        assert recall_at_k(ranking, relevant, 1) == 0.5
        assert precision_at_k(ranking, relevant, 5) == pytest.approx(0.4)
        assert recall_at_k(ranking, relevant, 5) == 1.0

    def test_all_relevant_gives_full_precision(self, ranking):
        relevant = set(ranking.items)
        for k in range(1, 6):
            assert precision_at_k(ranking, relevant, k) == 1.0

    def test_k_beyond_length_keeps_denominator(self, ranking):
        relevant = {"a", "c"}
        assert precision_at_k(ranking, relevant, 10) == pytest.approx(2 / 10)
        assert recall_at_k(ranking, relevant, 10) == 1.0

    def test_monotonicity_over_random_rankings(self):
        rng = np.random.default_rng(123)
        for _ in range(200):
            n = int(rng.integers(2, 30))
            items = [f"i{j}" for j in range(n)]
            scores = rng.standard_normal(n)
            ranking = RankedList.from_scores(zip(items, scores))
            relevant = {i for i in items if rng.random() < 0.4} or {items[0]}
            prev_r, prev_kp = 0.0, 0.0
            for k in range(1, n + 1):
                r = recall_at_k(ranking, relevant, k)
                kp = k * precision_at_k(ranking, relevant, k)
                assert r >= prev_r - 1e-12
                assert kp >= prev_kp - 1e-12
                prev_r, prev_kp = r, kp

    def test_invalid_k_rejected(self, ranking):
        with pytest.raises(ValueError):
            precision_at_k(ranking, {"a"}, 0)
        with pytest.raises(ValueError):
            recall_at_k(ranking, set(), 3)


class TestEvaluateModel:
    def test_predicted_equals_gold_gives_near_zero_kl(self, sphere10, hex_cell_far_from_pentagons):
        from viewsphere.scorer import ScoreMap

        gold = gold_distribution(sphere10, hex_cell_far_from_pentagons)
        smap = ScoreMap(Query("car", "front"), "test", 5.0, sphere10.checksum, gold.weights)
        report = evaluate_model(
            [EvalEntry("obj1", "car", "front", smap)], {"front": gold}
        )
        assert report.kl["car"]["front"] < 1e-6

    def test_mean_over_objects(self, sphere2):
        from viewsphere.scorer import ScoreMap

        gold = gold_distribution(sphere2, 0)
        q = Query("car", "front")
        maps = []
        for seed in (1, 2):
            rng = np.random.default_rng(seed)
            maps.append(ScoreMap(q, "t", 5.0, sphere2.checksum, rng.uniform(0, 1, sphere2.n_cells)))
        entries = [EvalEntry(f"o{i}", "car", "front", m) for i, m in enumerate(maps)]
        report = evaluate_model(entries, {"front": gold})
        individual = [
            kl_divergence(gold, normalize_map(m)) for m in maps
        ]
        assert report.kl["car"]["front"] == pytest.approx(float(np.mean(individual)))

    def test_missing_cells_reported(self, sphere2):
        gold = gold_distribution(sphere2, 0)
        report = evaluate_model([], {"front": gold}, expected_cells=[("car", "front")])
        assert any("car" in m for m in report.missing)

    def test_retrieval_aggregation_and_text_output(self):
        rq = RetrievalQuery(
            split="synth",
            label="car/front",
            ranking=RankedList(("a", "b", "c"), (3.0, 2.0, 1.0)),
            relevant=frozenset({"a"}),
        )
        report = evaluate_model(retrieval_queries=[rq], ks=(1, 5, 10))
        assert report.retrieval["synth"]["P@1"] == 1.0
        assert report.retrieval["synth"]["R@1"] == 1.0
        text = report.to_text()
        assert "P@1" in text and "synth" in text
        assert report.to_json().startswith("{")


def test_smooth_oracle_manifest_gives_perfect_p_at_1(sphere10):
    """Gold-cell images rank first under the smooth oracle by construction."""
    from viewsphere.camera import SHAPENET, canonical_direction

    queries = [Query("car", v) for v in ("front", "top", "left")]
    retrieval = []
    rng = np.random.default_rng(0)
    for q in queries:
        gold_cell = sphere10.nearest_cell(canonical_direction(SHAPENET, q.view))
        oracle = make_oracle(OracleProfile("smooth", gold_cell), sphere10)
        records = {f"img-gold-{q.view}": gold_cell}
        for i in range(30):
            c = int(rng.integers(sphere10.n_cells))
            if c != gold_cell:
                records[f"img-{i}"] = c
        scored = [(name, oracle.score_cell(q, cell)) for name, cell in records.items()]
        retrieval.append(
            RetrievalQuery(
                split="synth",
                label=f"{q.category}/{q.view}",
                ranking=RankedList.from_scores(scored),
                relevant=frozenset({f"img-gold-{q.view}"}),
            )
        )
    report = evaluate_model(retrieval_queries=retrieval)
    assert report.retrieval["synth"]["P@1"] == 1.0
