"""
Type definitions for the encoders module.

Boxes are ``(cx, cy, w, h)`` normalized to the feature grid extent, which
equals the image extent whenever the image size is a multiple of the stride.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import torch
from pydantic import BaseModel, Field, field_validator

from app.core.errors import EncoderError


def validate_box(box: List[float]) -> List[float]:
    if len(box) != 4:
        raise ValueError("box must have four components (cx, cy, w, h)")
    if any(not 0.0 <= v <= 1.0 for v in box):
        raise ValueError(f"box components must lie in [0, 1]: {box}")
    if box[2] <= 0.0 or box[3] <= 0.0:
        raise ValueError(f"box must have positive extent: {box}")
    return [float(v) for v in box]


class SceneObject(BaseModel):
    """One planted object of a synthetic scene."""

    box: List[float]
    subject: str
    attributes: List[str] = Field(default_factory=list)

    @field_validator("box")
    @classmethod
    def check_box(cls, v):
        return validate_box(v)


class SceneSpec(BaseModel):
    """Synthetic scene description, or a pointer to precomputed features."""

    image_id: str
    image_size: Tuple[int, int] = (128, 128)
    stride: int = Field(16, ge=1)
    seed: int = 0
    objects: List[SceneObject] = Field(default_factory=list)
    feature_file: Optional[str] = None


@dataclass
class SpatialFeatureMap:
    """Dense (H, W, d) feature grid of one image."""

    features: torch.Tensor
    stride: int
    image_size: Tuple[int, int]

    def __post_init__(self):
        if self.features.dim() != 3:
            raise EncoderError("feature map must have shape (H, W, d)", shape=tuple(self.features.shape))
        rows, cols, _ = self.features.shape
        height, width = self.image_size
        if rows * self.stride < height or cols * self.stride < width:
            raise EncoderError(
                "feature grid does not cover the image",
                grid=(rows, cols),
                stride=self.stride,
                image_size=self.image_size,
            )

    @property
    def grid_shape(self) -> Tuple[int, int]:
        return int(self.features.shape[0]), int(self.features.shape[1])

    @property
    def dim(self) -> int:
        return int(self.features.shape[2])

    def flat(self) -> torch.Tensor:
        """Row-major (H*W, d) view; row index = r * W + c."""
        return self.features.reshape(-1, self.dim)

    def cell_centers(self) -> torch.Tensor:
        """Normalized (x, y) centers of all cells in row-major order, shape (H*W, 2)."""
        rows, cols = self.grid_shape
        ys = (torch.arange(rows, dtype=self.features.dtype) + 0.5) / rows
        xs = (torch.arange(cols, dtype=self.features.dtype) + 0.5) / cols
        grid_y, grid_x = torch.meshgrid(ys, xs, indexing="ij")
        return torch.stack([grid_x.reshape(-1), grid_y.reshape(-1)], dim=1)


@dataclass
class EmbeddingSet:
    """Text embeddings of a vocabulary of n classes.

    ``full`` holds the frozen-encoder full-name embeddings; ``refined_full``
    is ``full`` passed through the projection head. Rows of classes that
    failed to encode are zero and flagged in ``valid``.
    """

    subjects: torch.Tensor
    attributes: List[torch.Tensor]
    full: torch.Tensor
    refined_full: torch.Tensor
    valid: torch.Tensor
    errors: Dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        n = self.subjects.shape[0]
        if len(self.attributes) != n or self.full.shape[0] != n or self.refined_full.shape[0] != n:
            raise EncoderError("embedding set rows disagree with the vocabulary size", n=n)

    @property
    def n(self) -> int:
        return int(self.subjects.shape[0])

    @property
    def dim(self) -> int:
        return int(self.subjects.shape[1])

    @property
    def attribute_counts(self) -> List[int]:
        return [int(a.shape[0]) for a in self.attributes]

    def classifier(self, kind: str) -> torch.Tensor:
        """Embeddings used as frozen CGOD classifier weights."""
        if kind == "subject":
            return self.subjects
        if kind == "full":
            return self.full
        if kind == "refined_full":
            return self.refined_full
        raise EncoderError(f"Unknown classifier embedding kind: {kind}")
