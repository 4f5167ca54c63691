"""
Type definitions for the fgad module.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import torch
from pydantic import BaseModel


@dataclass(frozen=True)
class RegionFeature:
    """Unit-normalized pooled feature of one box."""

    vector: torch.Tensor
    box: Tuple[float, float, float, float]
    cell_count: int


@dataclass
class ScoringContext:
    """What a fine scorer may look at besides the boxes."""

    refined_full: torch.Tensor
    class_names: Sequence[str] = ()
    image_id: Optional[str] = None


class GenerativeRequest(BaseModel):
    """One yes/no question to a generative VLM about one region."""

    model: str
    image_id: str
    box: List[float]
    prompt: str
    caption: str
