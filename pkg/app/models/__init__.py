"""TKGE Models Package"""
from .schemas import *
from .graph import (
    KGBuilder,
    Quadruple,
    TemporalKG,
    TimeAxis,
    Timestamp,
    Vocabulary,
    build_filter_index,
    timestamp_numeric,
    timestamp_tokens,
)
