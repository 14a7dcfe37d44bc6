"""
Training Service
Negative sampling, margin ranking loss, Adam and the epoch/batch loop; grid search on top
"""
import copy
import csv
import logging
import time
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from torch.optim.optimizer import Optimizer
from tqdm import tqdm

from ..config import get_settings
from ..errors import DivergenceError, NonFiniteGradientError, TKGError
from ..models.graph import Quadruple, TemporalKG
from ..models.schemas import (
    EpochRecord,
    EvaluationReport,
    GridResult,
    GridSpec,
    LossReduction,
    ModelName,
    TrainConfig,
    TrainLog,
)
from .embedding_service import TemporalEmbeddingModel, init_parameters
from .evaluation_service import EvaluationService


logger = logging.getLogger(__name__)


# ==============================================================================
# NEGATIVE SAMPLING
# ==============================================================================

class NegativeSampler:
    """Uniform corruption: a fair coin picks head or tail, replaced by a different uniform entity."""

    def __init__(self, n_entities: int, rng: np.random.Generator):
        if n_entities < 2:
            raise TKGError(f"negative sampling needs at least 2 entities, got {n_entities}")
        self.n_entities = n_entities
        self.rng = rng

    def corrupt(self, heads: np.ndarray, tails: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray]:
        """(B, n) corrupted heads and tails for B positives."""
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        heads = np.repeat(np.asarray(heads)[:, None], n, axis=1)
        tails = np.repeat(np.asarray(tails)[:, None], n, axis=1)
        replace_head = self.rng.random(heads.shape) < 0.5
        original = np.where(replace_head, heads, tails)
        replacement = self.rng.integers(0, self.n_entities - 1, size=heads.shape)
        replacement += replacement >= original
        return np.where(replace_head, replacement, heads), np.where(replace_head, tails, replacement)


def sample_negatives(q: Quadruple, n: int, kg: TemporalKG, rng: np.random.Generator) -> List[Quadruple]:
    """n corruptions of one fact; relation and timestamp are kept."""
    heads, tails = NegativeSampler(kg.n_entities, rng).corrupt(np.array([q.head]), np.array([q.tail]), n)
    return [q._replace(head=int(h), tail=int(t)) for h, t in zip(heads[0], tails[0])]


# ==============================================================================
# LOSS AND OPTIMIZER
# ==============================================================================

def triplet_loss(pos_scores: torch.Tensor, neg_scores: torch.Tensor, margin: float,
                 reduction: LossReduction = LossReduction.SUM) -> torch.Tensor:
    """Σ max(0, margin - f(pos) + f(neg)) with each positive paired to its own row of negatives."""
    neg_scores = neg_scores.reshape(pos_scores.shape[0], -1)
    hinge = torch.clamp(margin - pos_scores.unsqueeze(1) + neg_scores, min=0.0)
    if LossReduction(reduction) == LossReduction.MEAN:
        return hinge.mean()
    return hinge.sum()


class AdamOptimizer(Optimizer):
    """Adam with bias correction; rejects non-finite gradients and re-projects constrained tensors."""

    def __init__(self, named_params: Iterable[Tuple[str, torch.nn.Parameter]], lr: float = 1e-3,
                 betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 projector: Optional[Callable[[], None]] = None):
        named_params = list(named_params)
        self.names = {id(p): name for name, p in named_params}
        defaults = dict(lr=lr, betas=betas, eps=eps)
        super().__init__([p for _, p in named_params], defaults)
        self.projector = projector
        self.t = 0

    @torch.no_grad()
    def step(self, closure=None):
        for group in self.param_groups:
            for p in group["params"]:
                if p.grad is not None and not torch.isfinite(p.grad).all():
                    raise NonFiniteGradientError(self.names.get(id(p), "?"))

        self.t += 1
        for group in self.param_groups:
            b1, b2 = group["betas"]
            lr = group["lr"]
            eps = group["eps"]
            bc1 = 1.0 - b1 ** self.t
            bc2 = 1.0 - b2 ** self.t

            for p in group["params"]:
                state = self.state[p]
                # Lazy state initialization
                if len(state) == 0:
                    state["m"] = torch.zeros_like(p)
                    state["v"] = torch.zeros_like(p)
                g = p.grad if p.grad is not None else torch.zeros_like(p)

                state["m"].mul_(b1).add_(g, alpha=1 - b1)
                state["v"].mul_(b2).addcmul_(g, g, value=1 - b2)

                m_hat = state["m"] / bc1
                v_hat = state["v"] / bc2
                p.sub_(lr * m_hat / (torch.sqrt(v_hat) + eps))

        if self.projector is not None:
            self.projector()


# ==============================================================================
# TRAINING
# ==============================================================================

@dataclass
class TrainResult:
    """Best-validation model, its history and the final validation report (if a valid split exists)."""
    model: TemporalEmbeddingModel
    log: TrainLog
    valid_report: Optional[EvaluationReport] = None


def _rngs(seed: int) -> Tuple[np.random.Generator, np.random.Generator]:
    shuffle_seq, negative_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(shuffle_seq), np.random.default_rng(negative_seq)


def _snapshot(model: TemporalEmbeddingModel) -> Dict[str, torch.Tensor]:
    return copy.deepcopy(model.state_dict())


class TrainingService:
    """Service for training and hyperparameter search on one graph."""

    def __init__(self, kg: TemporalKG, evaluator: Optional[EvaluationService] = None,
                 dtype: Optional[torch.dtype] = None, progress: Optional[bool] = None):
        settings = get_settings()
        self.kg = kg
        self.evaluator = evaluator or EvaluationService(kg, chunk_size=settings.eval_chunk_size)
        self.dtype = dtype or settings.torch_dtype
        self.progress = settings.progress if progress is None else progress

    def new_model(self, config: TrainConfig) -> TemporalEmbeddingModel:
        return init_parameters(
            config.model, self.kg.n_entities, self.kg.n_relations, config.dim, self.kg.time_axis,
            seed=config.seed, gamma=config.gamma, tero_norm=config.tero_norm, dtype=self.dtype,
        )

    def train(self, config: TrainConfig) -> TrainResult:
        kg = self.kg
        if not kg.train:
            raise TKGError("training split is empty")
        model = self.new_model(config)
        log = TrainLog()
        if config.n_epochs == 0:
            return TrainResult(model, log)

        shuffle_rng, negative_rng = _rngs(config.seed)
        sampler = NegativeSampler(kg.n_entities, negative_rng)
        heads = np.array([q.head for q in kg.train])
        relations = torch.tensor([q.relation for q in kg.train], dtype=torch.long)
        tails = np.array([q.tail for q in kg.train])
        times = model.encode_times([q.timestamp for q in kg.train])
        optimizer = AdamOptimizer(model.named_parameters(), lr=config.learning_rate, projector=model.project)

        best_state: Optional[Dict[str, torch.Tensor]] = None
        last_finite = _snapshot(model)
        stale_evals = 0
        n_train = len(kg.train)

        epochs = range(1, config.n_epochs + 1)
        for epoch in tqdm(epochs, desc=config.model.value, disable=not self.progress):
            started = time.perf_counter()
            order = shuffle_rng.permutation(n_train)
            batch_losses = []
            for start in range(0, n_train, config.batch_size):
                idx = order[start:start + config.batch_size]
                rows = torch.from_numpy(idx)
                batch_times = times.select(rows)
                neg_h, neg_t = sampler.corrupt(heads[idx], tails[idx], config.n_neg)

                pos = model.score(torch.from_numpy(heads[idx]), relations[rows],
                                  torch.from_numpy(tails[idx]), batch_times)
                neg = model.score(torch.from_numpy(neg_h.reshape(-1)), relations[rows].repeat_interleave(config.n_neg),
                                  torch.from_numpy(neg_t.reshape(-1)), batch_times.repeat(config.n_neg))
                loss = triplet_loss(pos, neg, config.margin, config.loss_reduction)
                if not torch.isfinite(loss):
                    raise DivergenceError(epoch, last_finite)

                optimizer.zero_grad()
                loss.backward()
                try:
                    optimizer.step()
                except NonFiniteGradientError as e:
                    raise DivergenceError(epoch, last_finite) from e
                batch_losses.append(float(loss.detach()))

            record = EpochRecord(epoch=epoch, loss=float(np.mean(batch_losses)),
                                 seconds=time.perf_counter() - started)
            last_finite = _snapshot(model)

            if kg.valid and (epoch % config.eval_every == 0 or epoch == config.n_epochs):
                report = self.evaluator.evaluate(kg.valid, model)
                record.valid_mrr = report.mrr
                record.valid_hits = report.hits
                if log.best_valid_mrr is None or report.mrr > log.best_valid_mrr:
                    log.best_valid_mrr = report.mrr
                    log.best_epoch = epoch
                    best_state = _snapshot(model)
                    stale_evals = 0
                else:
                    stale_evals += 1
            log.records.append(record)
            logger.info(
                "epoch %d loss %.6f (%.2fs)%s", epoch, record.loss, record.seconds,
                f" valid MRR {record.valid_mrr:.4f}" if record.valid_mrr is not None else "",
            )
            if stale_evals >= config.patience:
                log.stopped_early = True
                logger.info("early stop at epoch %d (best epoch %s)", epoch, log.best_epoch)
                break

        if best_state is not None:
            model.load_state_dict(best_state)
        valid_report = self.evaluator.evaluate(kg.valid, model) if kg.valid else None
        return TrainResult(model, log, valid_report)

    # ==========================================================================
    # GRID SEARCH
    # ==========================================================================

    def grid_search(self, model: Union[ModelName, str], grid: GridSpec,
                    record_test: bool = False) -> List[GridResult]:
        """Train every grid point; rank by validation MRR desc, then smaller dim, then smaller lr.

        With `record_test`, each trained point is also scored on the test split.
        """
        if not self.kg.valid:
            raise TKGError("grid search ranks by validation MRR but the validation split is empty")
        if record_test and not self.kg.test:
            raise TKGError("test MRR requested but the test split is empty")
        results = []
        points = grid.points(ModelName(model))
        for i, config in enumerate(points, start=1):
            started = time.perf_counter()
            try:
                outcome = self.train(config)
                result = GridResult(
                    config=config,
                    valid_mrr=outcome.valid_report.mrr if outcome.valid_report else None,
                    test_mrr=self.evaluator.evaluate(self.kg.test, outcome.model).mrr if record_test else None,
                    epochs_run=outcome.log.epochs_run,
                    seconds=time.perf_counter() - started,
                )
            except (TKGError, ValueError) as e:
                logger.warning("grid point %d/%d failed: %s", i, len(points), e)
                result = GridResult(config=config, seconds=time.perf_counter() - started, error=str(e))
            logger.info("grid point %d/%d: %s", i, len(points), result.valid_mrr)
            results.append(result)
        return rank_grid_results(results)


def rank_grid_results(results: Sequence[GridResult]) -> List[GridResult]:
    def key(r: GridResult):
        failed = r.valid_mrr is None
        return (failed, -(r.valid_mrr or 0.0), r.config.dim, r.config.learning_rate)
    return sorted(results, key=key)


GRID_AXES = ("learning_rate", "n_neg", "margin", "dim", "gamma", "batch_size")


def grid_marginals(results: Sequence[GridResult], metric: str = "valid_mrr") -> Dict[str, Dict[str, float]]:
    """Mean `metric` (valid_mrr or test_mrr) per value of each axis; points lacking it are skipped."""
    if metric not in ("valid_mrr", "test_mrr"):
        raise ValueError(f"unknown grid metric {metric!r}")
    out: Dict[str, Dict[str, float]] = {}
    for axis in GRID_AXES:
        grouped: Dict[str, List[float]] = defaultdict(list)
        for r in results:
            score = getattr(r, metric)
            if score is not None:
                grouped[str(getattr(r.config, axis))].append(score)
        out[axis] = {value: float(np.mean(scores)) for value, scores in grouped.items()}
    return out


def write_grid_csv(path: Union[str, Path], results: Sequence[GridResult]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["rank", "model", *GRID_AXES, "valid_mrr", "test_mrr", "epochs_run", "seconds", "error"])
        for rank, r in enumerate(results, start=1):
            c = r.config
            writer.writerow([
                rank, c.model.value, *(getattr(c, axis) for axis in GRID_AXES),
                "" if r.valid_mrr is None else f"{r.valid_mrr:.6f}",
                "" if r.test_mrr is None else f"{r.test_mrr:.6f}",
                r.epochs_run, f"{r.seconds:.3f}", r.error or "",
            ])
