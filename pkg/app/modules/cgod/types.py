"""
Type definitions for the cgod module.
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

import torch


@dataclass(frozen=True)
class QueryCandidate:
    """One selected encoder cell."""

    embedding: torch.Tensor
    matched_class: int
    source_cell: Tuple[int, int]
    selection_logit: float
    row: int


@dataclass
class FeatureContext:
    """Encoder-side tensors of one image, flattened row-major."""

    conv: torch.Tensor
    enc: torch.Tensor
    centers: torch.Tensor
    pos: torch.Tensor
    grid_width: int

    @property
    def grid_shape(self) -> Tuple[int, int]:
        return self.enc.shape[0] // self.grid_width, self.grid_width


@dataclass
class Prediction:
    """One detected box with its scores over the vocabulary."""

    embedding: torch.Tensor
    box: torch.Tensor
    coarse_logits: torch.Tensor
    coarse_scores: torch.Tensor
    matched_class: int
    s_fine: Optional[torch.Tensor] = None
    s_final: Optional[torch.Tensor] = None
    fine_fallback: bool = False


@dataclass
class DetectorOutput:
    """Batched outputs of one forward pass (k predictions, n classes)."""

    embeddings: torch.Tensor
    boxes: torch.Tensor
    coarse_logits: torch.Tensor
    coarse_scores: torch.Tensor
    rows: torch.Tensor
    matched: torch.Tensor
    selection_logits: torch.Tensor
    references: Optional[torch.Tensor] = None

    @property
    def k(self) -> int:
        return int(self.boxes.shape[0])

    def predictions(self) -> List[Prediction]:
        return [
            Prediction(
                embedding=self.embeddings[j].detach(),
                box=self.boxes[j].detach(),
                coarse_logits=self.coarse_logits[j].detach(),
                coarse_scores=self.coarse_scores[j].detach(),
                matched_class=int(self.matched[j]),
            )
            for j in range(self.k)
        ]
