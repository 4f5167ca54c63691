"""
Training module.
Two-stage training with set matching; the train subcommand is registered in
routes.py.
"""

from .losses import detection_loss, fine_loss
from .matcher import match_predictions
from .service import StageTrainer, train_stage1, train_stage2
from .types import Assignment, IterationLog, TrainResult, TrainSample

__all__ = [
    "detection_loss",
    "fine_loss",
    "match_predictions",
    "StageTrainer",
    "train_stage1",
    "train_stage2",
    "Assignment",
    "IterationLog",
    "TrainResult",
    "TrainSample",
]
