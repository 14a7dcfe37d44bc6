"""
TKGE Models
Pydantic schemas for configuration, reports and forecasts
"""
import itertools
from datetime import date
from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator


# ==============================================================================
# ENUMS
# ==============================================================================

class ModelName(str, Enum):
    TRANSE = "transe"
    DISTMULT = "distmult"
    DE_TRANSE = "de-transe"
    DE_DISTMULT = "de-distmult"
    TA_TRANSE = "ta-transe"
    TA_DISTMULT = "ta-distmult"
    TERO = "tero"

    @property
    def is_diachronic(self) -> bool:
        return self in (ModelName.DE_TRANSE, ModelName.DE_DISTMULT)


class LossReduction(str, Enum):
    SUM = "sum"
    MEAN = "mean"


class TieMode(str, Enum):
    PESSIMISTIC = "pessimistic"
    MEAN = "mean"


class TeroNorm(str, Enum):
    L1 = "l1"
    L2 = "l2"


class TimeStep(str, Enum):
    QUARTERLY = "quarterly"
    MONTHLY = "monthly"
    YEARLY = "yearly"
    EXPLICIT = "explicit"


# ==============================================================================
# DATASET MODELS
# ==============================================================================

class DatasetManifest(BaseModel):
    """Where a dataset lives and how it is split."""
    train_path: Optional[str] = None
    valid_path: Optional[str] = None
    test_path: Optional[str] = None
    single_path: Optional[str] = None
    ratios: Tuple[float, float, float] = (0.9, 0.05, 0.05)
    seed: int = 0
    split_by_time: Optional[date] = None
    date_format: str = "%Y-%m-%d"
    delimiter: str = "\t"

    @field_validator("ratios")
    @classmethod
    def ratios_positive(cls, v: Tuple[float, float, float]) -> Tuple[float, float, float]:
        if any(r <= 0 for r in v):
            raise ValueError("split ratios must be positive")
        if abs(sum(v) - 1.0) > 1e-9:
            raise ValueError(f"split ratios must sum to 1, got {sum(v)}")
        return v

    @model_validator(mode="after")
    def one_source(self) -> "DatasetManifest":
        if self.single_path is None and self.train_path is None:
            raise ValueError("provide either a single file or a train file")
        if self.single_path is not None and self.train_path is not None:
            raise ValueError("single-file mode and split files are mutually exclusive")
        return self

    @property
    def single_file(self) -> bool:
        return self.single_path is not None


class DatasetStats(BaseModel):
    """Dataset counts."""
    n_entities: int = 0
    n_relations: int = 0
    n_train: int = 0
    n_valid: int = 0
    n_test: int = 0
    n_quadruples: int = 0
    n_timestamps: int = 0
    first_date: Optional[date] = None
    last_date: Optional[date] = None
    span_days: int = 0
    relation_counts: Dict[str, int] = {}


# ==============================================================================
# TRAINING MODELS
# ==============================================================================

class TrainConfig(BaseModel):
    """Hyperparameters for one training run."""
    model: ModelName = ModelName.TA_DISTMULT
    learning_rate: float = Field(0.001, ge=0)
    dim: int = Field(100, ge=1)
    margin: float = Field(1.0, gt=0)
    n_neg: int = Field(10, ge=1)
    batch_size: int = Field(2000, ge=1)
    n_epochs: int = Field(500, ge=0)
    gamma: float = Field(0.1, ge=0, le=1)
    seed: int = 0
    patience: int = Field(20, ge=1)
    eval_every: int = Field(5, ge=1)
    loss_reduction: LossReduction = LossReduction.SUM
    tero_norm: TeroNorm = TeroNorm.L1


class GridSpec(BaseModel):
    """Cartesian hyperparameter search space; non-grid fields come from `base`."""
    learning_rates: List[float] = [0.01, 0.001, 0.0001]
    n_negs: List[int] = [10, 30, 40]
    margins: List[float] = [1, 5, 10, 20]
    dims: List[int] = [50, 100, 150, 200]
    gammas: List[float] = [0.1, 0.2]
    batch_sizes: List[int] = [2000]
    base: TrainConfig = TrainConfig()

    @field_validator("learning_rates", "n_negs", "margins", "dims", "gammas", "batch_sizes")
    @classmethod
    def non_empty(cls, v: list) -> list:
        if not v:
            raise ValueError("grid axes must be non-empty")
        return v

    def points(self, model: ModelName) -> List[TrainConfig]:
        gammas = self.gammas if model.is_diachronic else [self.base.gamma]
        configs = []
        for lr, n_neg, margin, dim, gamma, batch in itertools.product(
            self.learning_rates, self.n_negs, self.margins, self.dims, gammas, self.batch_sizes
        ):
            configs.append(self.base.model_copy(update={
                "model": model,
                "learning_rate": lr,
                "n_neg": n_neg,
                "margin": margin,
                "dim": dim,
                "gamma": gamma,
                "batch_size": batch,
            }))
        return configs


class EpochRecord(BaseModel):
    """One line of the training log."""
    epoch: int
    loss: float
    seconds: float
    valid_mrr: Optional[float] = None
    valid_hits: Optional[Dict[int, float]] = None


class TrainLog(BaseModel):
    """Per-epoch history of a run."""
    records: List[EpochRecord] = []
    best_epoch: Optional[int] = None
    best_valid_mrr: Optional[float] = None
    stopped_early: bool = False

    @property
    def epochs_run(self) -> int:
        return len(self.records)

    def to_jsonl(self) -> str:
        return "".join(r.model_dump_json(exclude_none=True) + "\n" for r in self.records)


class GridResult(BaseModel):
    """Outcome of one grid point."""
    config: TrainConfig
    valid_mrr: Optional[float] = None
    test_mrr: Optional[float] = None
    epochs_run: int = 0
    seconds: float = 0.0
    error: Optional[str] = None


# ==============================================================================
# EVALUATION MODELS
# ==============================================================================

class RankMetrics(BaseModel):
    """MRR / Hits@k / MR over a set of ranks."""
    mrr: float
    hits: Dict[int, float]
    mr: float
    n_queries: int

    @model_validator(mode="after")
    def ordered(self) -> "RankMetrics":
        ks = sorted(self.hits)
        for a, b in zip(ks, ks[1:]):
            if self.hits[a] > self.hits[b] + 1e-12:
                raise ValueError("hits@k must be non-decreasing in k")
        if not 0 < self.mrr <= 1 or self.mr < 1:
            raise ValueError("mrr must lie in (0, 1] and mr must be >= 1")
        return self


class EvaluationReport(RankMetrics):
    """Filtered link-prediction metrics for a query set."""
    n_test: int
    per_relation: Optional[Dict[str, RankMetrics]] = None

    def percentages(self) -> Dict[str, float]:
        row = {f"Hit@{k}": round(100 * v, 2) for k, v in sorted(self.hits.items())}
        row["MRR"] = round(100 * self.mrr, 2)
        return row

    def as_table(self, label: str = "model") -> str:
        row = self.percentages()
        header = f"{'Model':<14}" + "".join(f"{name:>9}" for name in row)
        line = f"{label:<14}" + "".join(f"{value:>9.2f}" for value in row.values())
        return f"{header}\n{line}\nMR {self.mr:.2f} over {self.n_test} quadruple(s)"


# ==============================================================================
# FORECAST MODELS
# ==============================================================================

class TimeGrid(BaseModel):
    """Dates at which forecasts are scored."""
    start: date
    end: date
    step: TimeStep = TimeStep.QUARTERLY
    dates: List[date] = []

    @model_validator(mode="after")
    def ordered(self) -> "TimeGrid":
        if self.end < self.start:
            raise ValueError("time grid end precedes start")
        if self.step == TimeStep.EXPLICIT:
            if not self.dates:
                raise ValueError("explicit time grid needs dates")
            if any(a >= b for a, b in zip(self.dates, self.dates[1:])):
                raise ValueError("explicit grid dates must be strictly increasing")
        return self

    def points(self) -> List[date]:
        if self.step == TimeStep.EXPLICIT:
            return list(self.dates)
        if self.start == self.end:
            return [self.start]
        months = {TimeStep.MONTHLY: 1, TimeStep.QUARTERLY: 3, TimeStep.YEARLY: 12}[self.step]
        # boundaries: 1st of a month whose index is a multiple of the step (Jan for yearly)
        index = self.start.year * 12 + self.start.month - 1
        if self.start.day > 1:
            index += 1
        index += (-index) % months
        points = []
        while True:
            current = date(index // 12, index % 12 + 1, 1)
            if current > self.end:
                break
            points.append(current)
            index += months
        return points


class ForecastSeries(BaseModel):
    """Plausibility of (head, relation, tail(s)) over a time grid."""
    head: int
    relation: int
    tails: List[int]
    dates: List[date]
    scores: List[float]
    remapped: List[date] = []
    aggregate: bool = False


class HeatmapMatrix(BaseModel):
    """Top-k tails by mean plausibility; one row per tail, one column per grid date."""
    head: int
    relation: int
    tails: List[int]
    dates: List[date]
    values: List[List[float]]
    remapped: List[date] = []


# ==============================================================================
# CHECKPOINT
# ==============================================================================

class CheckpointMeta(BaseModel):
    """Contents of meta.json in a checkpoint directory."""
    model: ModelName
    dim: int
    gamma: float = 0.0
    temporal_dim: int = 0
    n_entities: int
    n_relations: int
    n_times: int = 0
    epoch: int = 0
    seed: int = 0
    tero_norm: TeroNorm = TeroNorm.L1
    time_origin: date
    train_dates: List[date] = []
    tensors: Dict[str, List[int]] = {}
    config: Optional[TrainConfig] = None
