"""
Forecasting Service
Scores job-skill facts over a time grid and aggregates them into trajectories and heatmaps
"""
import csv
import logging
from datetime import date
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
import torch

from ..errors import ForecastError
from ..models.graph import TemporalKG, Vocabulary
from ..models.schemas import ForecastSeries, HeatmapMatrix, ModelName, TimeGrid
from .embedding_service import TemporalEmbeddingModel


logger = logging.getLogger(__name__)


def candidate_facts(job: int, relation: int, skills: Sequence[int], kg: TemporalKG,
                    exclude_seen: bool = True) -> List[Tuple[int, int, int]]:
    """job × skills, minus (when asked) pairs seen in train at any timestamp."""
    if not skills:
        raise ForecastError("candidate_facts needs at least one skill")
    seen = kg.train_pairs(relation) if exclude_seen else set()
    return [(job, relation, s) for s in skills if (job, relation, s) not in seen]


def typed_candidates(relation: int, kg: TemporalKG) -> List[int]:
    """Entities that occur as a tail of `relation` in train, in id order."""
    return sorted({q.tail for q in kg.train if q.relation == relation})


class ForecastingService:
    """Service for plausibility trajectories of one trained model."""

    def __init__(self, model: TemporalEmbeddingModel):
        self.model = model

    def score_matrix(self, job: int, relation: int, skills: Sequence[int],
                     dates: Sequence[date]) -> Tuple[np.ndarray, List[date]]:
        """(len(skills), len(dates)) plausibilities and the dates remapped to a training timestamp."""
        if not skills:
            raise ForecastError("no skills to forecast")
        if not dates:
            raise ForecastError("time grid is empty")
        n_skills, n_dates = len(skills), len(dates)
        heads = torch.full((n_skills * n_dates,), job, dtype=torch.long)
        relations = torch.full((n_skills * n_dates,), relation, dtype=torch.long)
        tails = torch.tensor(list(skills), dtype=torch.long).repeat_interleave(n_dates)
        times = self.model.encode_times(list(dates))
        self.model.check_ids(heads, relations, tails)
        rows = torch.arange(n_dates).repeat(n_skills)
        with torch.no_grad():
            scores = self.model.score(heads, relations, tails, times.select(rows))
        remapped = []
        if self.model.name == ModelName.TERO:
            remapped = [d for d, flag in zip(dates, times.remapped) if flag]
            if remapped:
                logger.warning("%d grid date(s) are not training timestamps; using the nearest one", len(remapped))
        return scores.reshape(n_skills, n_dates).double().numpy(), remapped

    def forecast(self, job: int, relation: int, skills: Sequence[int], grid: TimeGrid,
                 aggregate: bool = False) -> List[ForecastSeries]:
        """One series per skill; with `aggregate`, a final series holding the mean over skills."""
        dates = grid.points()
        matrix, remapped = self.score_matrix(job, relation, skills, dates)
        series = [
            ForecastSeries(head=job, relation=relation, tails=[s], dates=dates,
                           scores=matrix[i].tolist(), remapped=remapped)
            for i, s in enumerate(skills)
        ]
        if aggregate:
            series.append(ForecastSeries(head=job, relation=relation, tails=list(skills), dates=dates,
                                         scores=matrix.mean(axis=0).tolist(), remapped=remapped,
                                         aggregate=True))
        return series

    def heatmap_matrix(self, job: int, relation: int, skills: Sequence[int], top_k: int,
                       grid: TimeGrid) -> HeatmapMatrix:
        """Top-k skills by mean plausibility over the grid, rows in rank order."""
        if top_k < 1:
            raise ForecastError(f"top_k must be >= 1, got {top_k}")
        if top_k > len(skills):
            logger.warning("top_k=%d exceeds the %d available skill(s); truncating", top_k, len(skills))
            top_k = len(skills)
        dates = grid.points()
        matrix, remapped = self.score_matrix(job, relation, skills, dates)
        order = np.argsort(-matrix.mean(axis=1), kind="stable")[:top_k]
        return HeatmapMatrix(
            head=job,
            relation=relation,
            tails=[int(skills[i]) for i in order],
            dates=dates,
            values=matrix[order].tolist(),
            remapped=remapped,
        )


# ==============================================================================
# CSV OUTPUT
# ==============================================================================

def write_series_csv(path: Union[str, Path], series: Sequence[ForecastSeries], entities: Vocabulary,
                     aggregate_label: str = "__mean__") -> None:
    """Long format: date, skill, score, remapped (1 when the date was scored as its nearest training date)."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["date", "skill", "score", "remapped"])
        for s in series:
            label = aggregate_label if s.aggregate else entities.string_of(s.tails[0])
            remapped = set(s.remapped)
            for day, score in zip(s.dates, s.scores):
                writer.writerow([day.isoformat(), label, repr(score), int(day in remapped)])


def write_heatmap_csv(path: Union[str, Path], heatmap: HeatmapMatrix, entities: Vocabulary,
                      remapped_label: str = "__remapped__") -> None:
    """First row = grid dates, first column = skill names.

    When any grid date was remapped, a final `remapped_label` row holds 1/0 per date.
    """
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["skill", *(d.isoformat() for d in heatmap.dates)])
        for tail, row in zip(heatmap.tails, heatmap.values):
            writer.writerow([entities.string_of(tail), *(repr(v) for v in row)])
        if heatmap.remapped:
            remapped = set(heatmap.remapped)
            writer.writerow([remapped_label, *(int(d in remapped) for d in heatmap.dates)])
