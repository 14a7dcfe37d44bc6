"""Tests for filtered ranking and the MRR / Hits@k / MR metrics."""
import numpy as np
import pytest

from app.errors import EmptyEvaluationError
from app.models.graph import KGBuilder
from app.models.schemas import EvaluationReport, ModelName, TieMode
from app.services import EvaluationService
from app.services.embedding_service import HEAD, TAIL, init_parameters
from app.services.evaluation_service import metrics_from_ranks, rank_from_scores

from .conftest import random_raws


class TestRankFromScores:

    def test_strict_maximum(self):
        assert rank_from_scores(np.array([0.1, 0.9, 0.3]), 1) == 1

    def test_hand_count(self):
        assert rank_from_scores(np.array([0.9, 0.95, 0.5, 0.3]), 0) == 2

    def test_filtered_rivals_skipped(self):
        assert rank_from_scores(np.array([0.9, 0.95, 0.99, 0.3]), 0, filtered={1, 2}) == 1

    def test_true_entity_never_filtered(self):
        assert rank_from_scores(np.array([0.9, 0.95]), 0, filtered={0}) == 2

    def test_ties(self):
        scores = np.array([0.5, 0.5, 0.5, 0.1])
        assert rank_from_scores(scores, 0) == 3
        assert rank_from_scores(scores, 0, tie_mode=TieMode.MEAN) == 2.0

    def test_bounds_and_monotone_transform(self, rng):
        for _ in range(50):
            scores = rng.normal(size=12)
            true = int(rng.integers(12))
            filtered = set(rng.integers(0, 12, size=4).tolist())
            rank = rank_from_scores(scores, true, filtered)
            assert 1 <= rank <= 12
            assert rank_from_scores(np.exp(3 * scores) + 7, true, filtered) == rank
            # un-filtering a rival never improves the rank
            if filtered - {true}:
                assert rank_from_scores(scores, true, set(list(filtered - {true})[1:])) >= rank


class TestMetrics:

    def test_single_quadruple(self):
        m = metrics_from_ranks([1, 2])
        assert m.mrr == pytest.approx(0.75)
        assert (m.hits[1], m.hits[3], m.mr) == (0.5, 1.0, 1.5)

    def test_all_first(self):
        m = metrics_from_ranks([1] * 6)
        assert m.mrr == 1.0 and m.mr == 1.0 and set(m.hits.values()) == {1.0}

    def test_scalar_oracle(self):
        ranks = [1, 2, 5, 10, 100, 3]
        m = metrics_from_ranks(ranks)
        assert m.mrr == pytest.approx(sum(1 / r for r in ranks) / 6)
        assert m.hits[1] == pytest.approx(1 / 6)
        assert m.hits[3] == pytest.approx(3 / 6)
        assert m.hits[10] == pytest.approx(5 / 6)
        assert m.mr == pytest.approx(121 / 6)

    def test_empty(self):
        with pytest.raises(EmptyEvaluationError):
            metrics_from_ranks([])

    def test_table(self):
        report = EvaluationReport(mrr=0.75, hits={1: 0.5, 3: 1.0, 10: 1.0}, mr=1.5, n_queries=2, n_test=1)
        assert report.percentages() == {"Hit@1": 50.0, "Hit@3": 100.0, "Hit@10": 100.0, "MRR": 75.0}
        header, line, _ = report.as_table("tero").splitlines()
        assert header.split() == ["Model", "Hit@1", "Hit@3", "Hit@10", "MRR"]
        assert line.split() == ["tero", "50.00", "100.00", "100.00", "75.00"]


def brute_force_rank(model, kg, q, slot):
    """Score each candidate separately and apply the filtered formula literally."""
    true_entity = q.head if slot == HEAD else q.tail
    target = model.score_quadruple(q)
    rank = 1
    for e in range(kg.n_entities):
        if e == true_entity:
            continue
        candidate = q._replace(head=e) if slot == HEAD else q._replace(tail=e)
        if candidate in kg.filter_index:
            continue
        if model.score_quadruple(candidate) >= target:
            rank += 1
    return rank


class TestEvaluationService:

    @pytest.mark.parametrize("graph", range(5))
    @pytest.mark.parametrize("name", [ModelName.DISTMULT, ModelName.DE_TRANSE, ModelName.TA_DISTMULT, ModelName.TERO])
    def test_brute_force_oracle(self, name, graph):
        # up to 20 entities, 5 relations, 8 dates and 300 facts, 100 of them held out as queries
        raws = random_raws(20 - graph, 5 - graph % 3, 8 - graph, 300, seed=21 + graph)
        kg = KGBuilder().build(raws[:200], raws[200:])
        gamma = 0.5 if name.is_diachronic else 0.1
        model = init_parameters(name, kg.n_entities, kg.n_relations, 4, kg.time_axis, seed=3 + graph, gamma=gamma)
        service = EvaluationService(kg, chunk_size=64)
        queries = list(kg.valid)
        assert len(queries) == 100
        ranks = service.ranks(queries, model)
        for slot in (HEAD, TAIL):
            expected = [brute_force_rank(model, kg, q, slot) for q in queries]
            assert ranks[slot] == expected

    def test_report(self, small_kg):
        model = init_parameters(ModelName.TRANSE, small_kg.n_entities, small_kg.n_relations, 5,
                                small_kg.time_axis, seed=1)
        service = EvaluationService(small_kg)
        report = service.evaluate(small_kg.test, model, per_relation=True)
        assert report.n_test == len(small_kg.test)
        assert report.n_queries == 2 * len(small_kg.test)
        assert report.hits[1] <= report.hits[3] <= report.hits[10]
        assert sum(m.n_queries for m in report.per_relation.values()) == report.n_queries
        again = service.evaluate(small_kg.test, model, per_relation=True)
        assert again == report

    def test_single_rank_matches_bulk(self, small_kg):
        model = init_parameters(ModelName.DISTMULT, small_kg.n_entities, small_kg.n_relations, 5,
                                small_kg.time_axis, seed=2)
        service = EvaluationService(small_kg, tie_mode=TieMode.MEAN)
        bulk = service.ranks(small_kg.test, model)
        for q, rank in zip(small_kg.test, bulk[TAIL]):
            assert service.filtered_rank(q, TAIL, model) == rank

    def test_empty_queries(self, small_kg):
        model = init_parameters(ModelName.DISTMULT, small_kg.n_entities, small_kg.n_relations, 5,
                                small_kg.time_axis)
        with pytest.raises(EmptyEvaluationError):
            EvaluationService(small_kg).evaluate([], model)
