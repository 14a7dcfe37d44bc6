"""Tests for negative sampling, the margin loss, Adam, the training loop and grid search."""
import csv
import json
import math
from datetime import date

import numpy as np
import pytest
import torch
from scipy.stats import chisquare

from app.errors import DivergenceError, NonFiniteGradientError, TKGError
from app.models.graph import KGBuilder, Quadruple, Timestamp
from app.models.schemas import GridResult, GridSpec, LossReduction, ModelName, TrainConfig
from app.services import EvaluationService, TrainingService, init_parameters
from app.services.dataset_service import synthetic_kg
from app.services.training_service import (
    AdamOptimizer,
    NegativeSampler,
    grid_marginals,
    rank_grid_results,
    sample_negatives,
    triplet_loss,
    write_grid_csv,
)


def quick_config(model, **overrides):
    values = dict(model=model, dim=4, learning_rate=0.01, n_neg=2, batch_size=8, n_epochs=3,
                  eval_every=1, patience=5, seed=0)
    if ModelName(model).is_diachronic:
        values["gamma"] = 0.5
    values.update(overrides)
    return TrainConfig(**values)


class TestNegativeSampling:

    def test_each_differs_in_one_slot(self, toy_kg, rng):
        q = toy_kg.train[0]
        negatives = sample_negatives(q, 2, toy_kg, rng)
        assert len(negatives) == 2
        for neg in negatives:
            assert neg.relation == q.relation and neg.timestamp == q.timestamp
            assert (neg.head != q.head) + (neg.tail != q.tail) == 1

    def test_two_entities_forced(self, rng):
        kg = KGBuilder().build([("a", "r", "b", "2015-01-01")])
        for neg in sample_negatives(kg.train[0], 20, kg, rng):
            assert (neg.head, neg.tail) in {(1, 1), (0, 0)}

    def test_single_entity_rejected(self, rng):
        with pytest.raises(TKGError):
            NegativeSampler(1, rng)

    def test_uniformity(self):
        sampler = NegativeSampler(100, np.random.default_rng(99))
        heads = np.full(1000, 7)
        tails = np.full(1000, 42)
        new_h, new_t = sampler.corrupt(heads, tails, 100)
        head_replaced = new_h != 7
        assert np.all(head_replaced ^ (new_t != 42))
        assert abs(head_replaced.mean() - 0.5) < 0.01

        replacements = np.where(head_replaced, new_h, new_t)
        head_counts = np.bincount(new_h[head_replaced], minlength=100)
        assert head_counts[7] == 0
        _, p = chisquare(np.delete(head_counts, 7))
        assert p > 0.01
        tail_counts = np.bincount(new_t[~head_replaced], minlength=100)
        assert tail_counts[42] == 0
        _, p = chisquare(np.delete(tail_counts, 42))
        assert p > 0.01
        assert replacements.size == 100_000


class TestTripletLoss:

    def test_margin_satisfied(self):
        loss = triplet_loss(torch.tensor([5.0]), torch.tensor([[1.0]]), margin=1.0)
        assert float(loss) == 0.0

    def test_all_zero_scores(self):
        assert float(triplet_loss(torch.tensor([0.0]), torch.tensor([[0.0]]), margin=1.0)) == 1.0

    def test_double_loop_oracle(self, rng):
        pos = rng.normal(size=3)
        neg = rng.normal(size=(3, 2))
        expected = sum(max(0.0, 2.0 - pos[i] + neg[i, j]) for i in range(3) for j in range(2))
        loss = triplet_loss(torch.tensor(pos), torch.tensor(neg.reshape(-1)), margin=2.0)
        assert float(loss) == pytest.approx(expected, abs=1e-12)
        mean = triplet_loss(torch.tensor(pos), torch.tensor(neg), margin=2.0, reduction=LossReduction.MEAN)
        assert float(mean) == pytest.approx(expected / 6, abs=1e-12)

    def test_non_negative(self, rng):
        for _ in range(20):
            loss = triplet_loss(torch.tensor(rng.normal(size=4)), torch.tensor(rng.normal(size=(4, 3))), 1.0)
            assert float(loss) >= 0.0


def scalar_param(value):
    return torch.nn.Parameter(torch.tensor([value], dtype=torch.float64))


class TestAdam:

    def test_first_step_magnitude(self):
        p = scalar_param(1.0)
        opt = AdamOptimizer([("p", p)], lr=0.01)
        p.grad = torch.tensor([3.0], dtype=torch.float64)
        opt.step()
        assert float(p) == pytest.approx(1.0 - 0.01 * 3.0 / (3.0 + 1e-8), abs=1e-12)

    def test_zero_grad_unchanged(self):
        p = scalar_param(2.0)
        opt = AdamOptimizer([("p", p)], lr=0.1)
        p.grad = torch.zeros(1, dtype=torch.float64)
        opt.step()
        assert float(p) == 2.0
        assert opt.t == 1

    def test_two_step_trace(self):
        p = scalar_param(0.0)
        opt = AdamOptimizer([("p", p)], lr=0.1)
        g, b1, b2, eps = 0.5, 0.9, 0.999, 1e-8
        m = v = 0.0
        x = 0.0
        for t in (1, 2):
            p.grad = torch.tensor([g], dtype=torch.float64)
            opt.step()
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            x -= 0.1 * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
        assert float(p) == pytest.approx(x, abs=1e-12)
        assert float(opt.state[p]["m"]) == pytest.approx(m)
        assert float(opt.state[p]["v"]) == pytest.approx(v)

    def test_non_finite_named(self):
        p = scalar_param(0.0)
        opt = AdamOptimizer([("relation_emb", p)], lr=0.1)
        p.grad = torch.tensor([float("nan")], dtype=torch.float64)
        with pytest.raises(NonFiniteGradientError, match="relation_emb"):
            opt.step()

    def test_projector_called(self):
        p = scalar_param(0.0)
        calls = []
        opt = AdamOptimizer([("p", p)], lr=0.1, projector=lambda: calls.append(1))
        p.grad = torch.ones(1, dtype=torch.float64)
        opt.step()
        assert calls == [1]

    def test_zero_lr_leaves_model(self, toy_kg):
        service = TrainingService(toy_kg, progress=False)
        config = quick_config(ModelName.DE_DISTMULT, learning_rate=0.0, n_epochs=1)
        before = service.new_model(config).state_dict()
        result = service.train(config)
        for name, tensor in result.model.state_dict().items():
            assert torch.equal(tensor, before[name])


class TestTrain:

    def test_zero_epochs(self, toy_kg):
        service = TrainingService(toy_kg, progress=False)
        config = quick_config(ModelName.TA_DISTMULT, n_epochs=0)
        result = service.train(config)
        assert result.log.records == [] and result.valid_report is None
        initial = service.new_model(config)
        for name, tensor in result.model.state_dict().items():
            assert torch.equal(tensor, initial.state_dict()[name])

    @pytest.mark.parametrize("model", [m for m in ModelName])
    def test_deterministic(self, toy_kg, model):
        service = TrainingService(toy_kg, progress=False)
        a = service.train(quick_config(model))
        b = service.train(quick_config(model))
        assert [(r.epoch, r.loss, r.valid_mrr) for r in a.log.records] == \
               [(r.epoch, r.loss, r.valid_mrr) for r in b.log.records]
        for name, tensor in a.model.state_dict().items():
            assert torch.equal(tensor, b.model.state_dict()[name])

    @pytest.mark.parametrize("model", [m for m in ModelName])
    def test_loss_decreases(self, model):
        kg = KGBuilder().build([
            ("a", "r", "b", "2015-01-01"), ("b", "r", "c", "2015-04-01"), ("c", "s", "d", "2015-07-01"),
            ("d", "s", "a", "2015-10-01"), ("a", "s", "c", "2016-01-01"),
        ])
        config = quick_config(model, n_epochs=50, dim=8, n_neg=4, batch_size=5, learning_rate=0.01)
        result = TrainingService(kg, progress=False).train(config)
        losses = np.array([r.loss for r in result.log.records])
        smooth = np.convolve(losses, np.ones(5) / 5, mode="valid")
        assert smooth[-1] < smooth[0]
        assert all(math.isfinite(x) for x in losses)

    def test_records_and_best(self, toy_kg):
        result = TrainingService(toy_kg, progress=False).train(quick_config(ModelName.DISTMULT, n_epochs=4,
                                                                            eval_every=2))
        assert [r.epoch for r in result.log.records] == [1, 2, 3, 4]
        assert result.log.records[0].valid_mrr is None
        assert result.log.records[1].valid_mrr is not None
        assert result.log.best_epoch in (2, 4)
        assert all(r.seconds >= 0 for r in result.log.records)
        lines = [json.loads(line) for line in result.log.to_jsonl().splitlines()]
        assert lines[0]["epoch"] == 1 and "valid_mrr" not in lines[0]

    def test_early_stop(self, toy_kg):
        config = quick_config(ModelName.TRANSE, n_epochs=40, learning_rate=0.0, patience=1)
        result = TrainingService(toy_kg, progress=False).train(config)
        assert result.log.stopped_early
        assert result.log.epochs_run == 2

    def test_divergence(self, toy_kg):
        config = quick_config(ModelName.DISTMULT, learning_rate=1e308, margin=1e308, n_epochs=5)
        with pytest.raises(DivergenceError) as err:
            TrainingService(toy_kg, progress=False).train(config)
        assert all(torch.isfinite(t).all() for t in err.value.last_state.values())

    def test_empty_train(self):
        kg = KGBuilder().build([])
        with pytest.raises(TKGError):
            TrainingService(kg, progress=False).train(quick_config(ModelName.TRANSE))


LEARNABILITY = dict(dim=50, learning_rate=0.001, margin=1.0, n_neg=10, batch_size=256, n_epochs=200,
                    eval_every=10, patience=50, seed=0, gamma=0.5)


@pytest.fixture(scope="module")
def temporal_kg():
    return synthetic_kg(seed=0)


@pytest.mark.slow
class TestLearnability:

    @pytest.mark.parametrize("name", [ModelName.TA_DISTMULT, ModelName.DE_DISTMULT])
    def test_learns_temporal_pattern(self, temporal_kg, name):
        kg = temporal_kg
        evaluator = EvaluationService(kg)
        untrained = init_parameters(name, kg.n_entities, kg.n_relations, 50, kg.time_axis, seed=0, gamma=0.5)
        # a uniform ranker over 50 entities sits near 0.09
        assert evaluator.evaluate(kg.test, untrained).mrr < 0.2

        result = TrainingService(kg, progress=False).train(TrainConfig(model=name, **LEARNABILITY))
        assert result.valid_report.mrr >= 0.5
        assert evaluator.evaluate(kg.test, result.model).mrr >= 0.5

    def test_static_model_cannot_use_time(self, temporal_kg):
        service = TrainingService(temporal_kg, progress=False)
        static = service.train(TrainConfig(model=ModelName.DISTMULT, **LEARNABILITY)).valid_report.mrr
        temporal = service.train(TrainConfig(model=ModelName.TA_DISTMULT, **LEARNABILITY)).valid_report.mrr
        # a (head, relation) has a different partner on odd and even dates, so a time-blind
        # ranking puts at most one of them first
        assert static <= 0.85
        assert temporal >= static + 0.1


class TestGridSearch:

    def test_default_grid_size(self):
        assert len(GridSpec().points(ModelName.DE_TRANSE)) == 288
        assert len(GridSpec().points(ModelName.TA_DISTMULT)) == 144
        assert {c.batch_size for c in GridSpec().points(ModelName.TERO)} == {2000}

    def test_one_point_equals_train(self, toy_kg):
        base = quick_config(ModelName.DISTMULT)
        grid = GridSpec(base=base, learning_rates=[base.learning_rate], n_negs=[base.n_neg],
                        margins=[base.margin], dims=[base.dim], batch_sizes=[base.batch_size])
        service = TrainingService(toy_kg, progress=False)
        [result] = service.grid_search(ModelName.DISTMULT, grid)
        assert result.valid_mrr == service.train(base).valid_report.mrr

    def test_ranking(self):
        a = GridResult(config=TrainConfig(dim=100, learning_rate=0.01), valid_mrr=0.6)
        b = GridResult(config=TrainConfig(dim=50, learning_rate=0.01), valid_mrr=0.4)
        c = GridResult(config=TrainConfig(dim=50, learning_rate=0.001), valid_mrr=0.4)
        failed = GridResult(config=TrainConfig(dim=50), error="diverged")
        assert rank_grid_results([failed, b, a, c]) == [a, c, b, failed]

    def test_failures_recorded(self, toy_kg):
        base = quick_config(ModelName.DE_TRANSE, n_epochs=1)
        grid = GridSpec(base=base, learning_rates=[0.01], n_negs=[2], margins=[1.0], dims=[4],
                        gammas=[0.1, 0.5], batch_sizes=[8])
        results = TrainingService(toy_kg, progress=False).grid_search(ModelName.DE_TRANSE, grid)
        assert len(results) == 2
        assert results[0].error is None and results[0].config.gamma == 0.5
        assert results[1].error is not None and results[1].valid_mrr is None

    def test_marginals_and_csv(self, tmp_path):
        results = [
            GridResult(config=TrainConfig(dim=50, margin=1), valid_mrr=0.2),
            GridResult(config=TrainConfig(dim=50, margin=5), valid_mrr=0.4),
            GridResult(config=TrainConfig(dim=100, margin=5), valid_mrr=0.9),
            GridResult(config=TrainConfig(dim=100, margin=1), error="x"),
        ]
        marginals = grid_marginals(results)
        assert marginals["dim"] == pytest.approx({"50": 0.3, "100": 0.9})
        assert marginals["margin"] == pytest.approx({"1.0": 0.2, "5.0": 0.65})
        write_grid_csv(tmp_path / "grid.csv", rank_grid_results(results))
        with open(tmp_path / "grid.csv", newline="", encoding="utf-8") as handle:
            rows = list(csv.DictReader(handle))
        assert [r["rank"] for r in rows] == ["1", "2", "3", "4"]
        assert rows[0]["dim"] == "100" and rows[-1]["error"] == "x"
        assert rows[0]["test_mrr"] == ""

    def test_marginals_over_test_mrr(self):
        results = [
            GridResult(config=TrainConfig(margin=1), valid_mrr=0.9, test_mrr=0.1),
            GridResult(config=TrainConfig(margin=5), valid_mrr=0.1, test_mrr=0.7),
            GridResult(config=TrainConfig(margin=5), valid_mrr=0.2),
        ]
        assert grid_marginals(results, "test_mrr")["margin"] == pytest.approx({"1.0": 0.1, "5.0": 0.7})
        assert grid_marginals(results)["margin"] == pytest.approx({"1.0": 0.9, "5.0": 0.15})
        with pytest.raises(ValueError):
            grid_marginals(results, "mr")

    def test_records_test_mrr(self, toy_kg):
        base = quick_config(ModelName.DISTMULT, n_epochs=1)
        grid = GridSpec(base=base, learning_rates=[0.01, 0.001], n_negs=[2], margins=[1.0], dims=[4],
                        gammas=[0.1], batch_sizes=[8])
        service = TrainingService(toy_kg, progress=False)
        results = service.grid_search(ModelName.DISTMULT, grid, record_test=True)
        for r in results:
            trained = service.train(r.config)
            assert r.test_mrr == service.evaluator.evaluate(toy_kg.test, trained.model).mrr
        assert all(r.test_mrr is None for r in service.grid_search(ModelName.DISTMULT, grid))


def test_negatives_keep_relation_and_time():
    q = Quadruple(0, 2, 1, Timestamp(date(2015, 1, 1)))
    kg = KGBuilder().build([("a", "r", "b", "2015-01-01"), ("c", "r", "d", "2015-01-01")])
    for neg in sample_negatives(q, 10, kg, np.random.default_rng(0)):
        assert neg.relation == 2 and neg.timestamp == q.timestamp
