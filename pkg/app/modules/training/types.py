"""
Type definitions for the training module.
"""

from dataclasses import dataclass
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from app.modules.encoders.types import SceneSpec, validate_box
from app.modules.vocabulary.types import FineGrainedClass


class TrainSample(BaseModel):
    """One training image with its vocabulary and ground truth.

    ``gt_subject_ids`` index ``subjects()``, the coarse vocabulary;
    ``gt_fine_ids`` index ``vocabulary``.
    """

    sample_id: str
    scene: SceneSpec
    vocabulary: List[FineGrainedClass]
    gt_boxes: List[List[float]] = Field(default_factory=list)
    gt_subject_ids: List[int] = Field(default_factory=list)
    gt_fine_ids: List[int] = Field(default_factory=list)

    @field_validator("gt_boxes")
    @classmethod
    def check_boxes(cls, v):
        return [validate_box(box) for box in v]

    @model_validator(mode="after")
    def check_ground_truth(self):
        if not len(self.gt_boxes) == len(self.gt_subject_ids) == len(self.gt_fine_ids):
            raise ValueError("gt_boxes, gt_subject_ids and gt_fine_ids must share one length")
        if not self.vocabulary:
            raise ValueError("training vocabulary is empty")
        subjects = self.subjects()
        for s, f in zip(self.gt_subject_ids, self.gt_fine_ids):
            if not 0 <= s < len(subjects):
                raise ValueError(f"subject id {s} outside the coarse vocabulary")
            if not 0 <= f < len(self.vocabulary):
                raise ValueError(f"fine id {f} outside the vocabulary")
            if self.vocabulary[f].subject != subjects[s]:
                raise ValueError("fine-grained label disagrees with its subject label")
        return self

    def subjects(self) -> List[str]:
        return list(dict.fromkeys(c.subject for c in self.vocabulary))


@dataclass
class Assignment:
    """One-to-one prediction/ground-truth pairs; unmatched predictions are background."""

    pred_indices: np.ndarray
    gt_indices: np.ndarray
    cost: float

    def __len__(self) -> int:
        return int(len(self.pred_indices))


class IterationLog(BaseModel):
    stage: int
    iteration: int
    sample_id: str
    loss: float
    loss_cls: float
    loss_box: float
    loss_fine: float
    matched: int
    grad_norm: float


class TrainResult(BaseModel):
    status: Literal["ok"] = "ok"
    stage: int
    iterations: int
    final_loss: Optional[float] = None
    checkpoint: Optional[str] = None
    log_path: Optional[str] = None
    projection_distance: float = 0.0
    mean_iou: Optional[float] = None
