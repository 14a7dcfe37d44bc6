"""
Evaluation Service
Filtered head/tail ranking and the MRR, Hits@k and MR metrics
"""
import logging
from collections import defaultdict
from typing import Dict, Iterable, List, Sequence, Union

import numpy as np
import torch

from ..errors import EmptyEvaluationError
from ..models.graph import Quadruple, TemporalKG
from ..models.schemas import EvaluationReport, RankMetrics, TieMode
from .embedding_service import HEAD, TAIL, TemporalEmbeddingModel


logger = logging.getLogger(__name__)

DEFAULT_KS = (1, 3, 10)


def rank_from_scores(scores: Union[np.ndarray, torch.Tensor], true_index: int,
                     filtered: Iterable[int] = (), tie_mode: TieMode = TieMode.PESSIMISTIC) -> float:
    """1 + number of unfiltered rivals scoring >= the true entity (ties split evenly in mean mode)."""
    scores = np.asarray(scores)
    target = scores[true_index]
    eligible = np.ones(scores.shape[0], dtype=bool)
    eligible[true_index] = False
    for e in filtered:
        if e != true_index:
            eligible[e] = False
    greater = int(np.count_nonzero((scores > target) & eligible))
    equal = int(np.count_nonzero((scores == target) & eligible))
    if tie_mode == TieMode.MEAN:
        return greater + 1 + equal / 2.0
    return greater + equal + 1


def metrics_from_ranks(ranks: Sequence[float], ks: Sequence[int] = DEFAULT_KS) -> RankMetrics:
    """MRR, Hits@k and MR over a flat list of ranks (head and tail ranks together)."""
    if not len(ranks):
        raise EmptyEvaluationError("no ranks to summarise")
    arr = np.asarray(ranks, dtype=np.float64)
    return RankMetrics(
        mrr=float(np.mean(1.0 / arr)),
        hits={int(k): float(np.mean(arr <= k)) for k in ks},
        mr=float(np.mean(arr)),
        n_queries=len(arr),
    )


class EvaluationService:
    """Service for filtered link-prediction evaluation against one graph's filter set."""

    def __init__(self, kg: TemporalKG, tie_mode: TieMode = TieMode.PESSIMISTIC, chunk_size: int = 65536):
        self.kg = kg
        self.tie_mode = TieMode(tie_mode)
        self.chunk_size = chunk_size

    def _filtered(self, q: Quadruple, slot: str):
        index = self.kg.filter_index
        if slot == HEAD:
            return index.known_heads(q.relation, q.tail, q.timestamp)
        return index.known_tails(q.head, q.relation, q.timestamp)

    def filtered_rank(self, q: Quadruple, slot: str, model: TemporalEmbeddingModel) -> float:
        scores = model.score_candidates([q], slot, self.chunk_size)[0].numpy()
        true_index = q.head if slot == HEAD else q.tail
        return rank_from_scores(scores, true_index, self._filtered(q, slot), self.tie_mode)

    def ranks(self, queries: Sequence[Quadruple], model: TemporalEmbeddingModel) -> Dict[str, List[float]]:
        """Head and tail ranks for every query, computed in bulk blocks."""
        block = max(1, self.chunk_size // max(1, model.n_entities))
        out: Dict[str, List[float]] = {HEAD: [], TAIL: []}
        for start in range(0, len(queries), block):
            chunk = list(queries[start:start + block])
            for slot in (HEAD, TAIL):
                scores = model.score_candidates(chunk, slot, self.chunk_size).numpy()
                for row, q in zip(scores, chunk):
                    true_index = q.head if slot == HEAD else q.tail
                    out[slot].append(rank_from_scores(row, true_index, self._filtered(q, slot), self.tie_mode))
        return out

    def evaluate(self, queries: Sequence[Quadruple], model: TemporalEmbeddingModel,
                 ks: Sequence[int] = DEFAULT_KS, per_relation: bool = False) -> EvaluationReport:
        if not queries:
            raise EmptyEvaluationError("evaluation needs at least one quadruple")
        ranks = self.ranks(queries, model)
        flat = ranks[HEAD] + ranks[TAIL]
        overall = metrics_from_ranks(flat, ks)

        breakdown = None
        if per_relation:
            grouped: Dict[int, List[float]] = defaultdict(list)
            for q, rank_h, rank_t in zip(queries, ranks[HEAD], ranks[TAIL]):
                grouped[q.relation].extend((rank_h, rank_t))
            breakdown = {
                self.kg.relations.string_of(r): metrics_from_ranks(values, ks)
                for r, values in sorted(grouped.items())
            }

        report = EvaluationReport(
            mrr=overall.mrr,
            hits=overall.hits,
            mr=overall.mr,
            n_queries=overall.n_queries,
            n_test=len(queries),
            per_relation=breakdown,
        )
        logger.debug("evaluated %d quadruple(s): MRR %.4f", len(queries), report.mrr)
        return report
