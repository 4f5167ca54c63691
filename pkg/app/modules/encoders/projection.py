"""
Projection head turning the frozen text encoder into the refined one.
"""

import torch
from torch import nn

from app.core.errors import DimensionMismatchError
from app.utils.tensor_utils import DTYPE, l2_normalize


class ProjectionHead(nn.Module):
    """normalize(W e + b); starts at identity with zero bias."""

    def __init__(self, dim: int, trainable: bool = False):
        super().__init__()
        self.dim = dim
        self.linear = nn.Linear(dim, dim, bias=True, dtype=DTYPE)
        with torch.no_grad():
            self.linear.weight.copy_(torch.eye(dim, dtype=DTYPE))
            self.linear.bias.zero_()
        self.trainable = trainable

    @property
    def trainable(self) -> bool:
        return self.linear.weight.requires_grad

    @trainable.setter
    def trainable(self, value: bool) -> None:
        for p in self.linear.parameters():
            p.requires_grad_(value)

    def forward(self, e: torch.Tensor) -> torch.Tensor:
        if e.shape[-1] != self.dim:
            raise DimensionMismatchError("Embedding dimension differs from the projection head", got=e.shape[-1], dim=self.dim)
        return l2_normalize(self.linear(e))

    def distance_from_identity(self) -> float:
        """Frobenius distance of (W, b) from the identity initialization."""
        eye = torch.eye(self.dim, dtype=DTYPE)
        with torch.no_grad():
            return float(
                torch.sqrt((self.linear.weight - eye).pow(2).sum() + self.linear.bias.pow(2).sum())
            )


def refine_embedding(head: ProjectionHead, e: torch.Tensor) -> torch.Tensor:
    """Refined embedding of one vector or a batch of row vectors."""
    return head(e)
