"""
Evaluation module.
Synthetic benchmark, hard-negative captions and per-track AP; the synth, eval
and ablate subcommands are registered in routes.py.
"""

from .metrics import average_precision, evaluate, evaluate_track, iou
from .negatives import generate_negatives
from .synthetic import generate_synthetic_benchmark, oracle_records
from .types import (
    AnnotationRecord,
    APResult,
    BenchmarkDataset,
    ImageRecord,
    PredictionRecord,
    ScoredBox,
    TrackResult,
    TrackSpec,
)

__all__ = [
    "average_precision",
    "evaluate",
    "evaluate_track",
    "iou",
    "generate_negatives",
    "generate_synthetic_benchmark",
    "oracle_records",
    "AnnotationRecord",
    "APResult",
    "BenchmarkDataset",
    "ImageRecord",
    "PredictionRecord",
    "ScoredBox",
    "TrackResult",
    "TrackSpec",
]
