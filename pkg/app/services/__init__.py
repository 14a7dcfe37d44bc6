"""TKGE Services Package"""
from .dataset_service import DatasetService
from .embedding_service import init_parameters
from .checkpoint_service import CheckpointService
from .evaluation_service import EvaluationService
from .training_service import TrainingService
from .forecasting_service import ForecastingService

__all__ = [
    "DatasetService",
    "init_parameters",
    "CheckpointService",
    "EvaluationService",
    "TrainingService",
    "ForecastingService",
]
