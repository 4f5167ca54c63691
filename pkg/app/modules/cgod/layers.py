"""
Coarse-grained detection layers.

Shapes: m encoder cells, n classes, k queries, A padded attribute slots,
d embedding channels. Nothing here mixes information across queries, so
every query-side operation is equivariant under query permutation.
"""

import math
from typing import List, Optional, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from scipy import ndimage
from torch import Tensor, nn

from app.core.errors import DimensionMismatchError, SelectionError
from app.utils.tensor_utils import DTYPE, LOGIT_BOUND, clamp_logits, inverse_sigmoid, l2_normalize

from .types import QueryCandidate


def classify(subject_embeddings: Tensor, features: Tensor, scale: float) -> Tensor:
    """Cosine classifier: (m, d) features against (n, d) frozen weights -> (m, n)."""
    if subject_embeddings.dim() != 2 or features.dim() != 2:
        raise DimensionMismatchError("classify expects 2-D inputs")
    if subject_embeddings.shape[1] != features.shape[1]:
        raise DimensionMismatchError(
            "Feature and class embedding dimensions differ",
            feature_dim=features.shape[1],
            class_dim=subject_embeddings.shape[1],
        )
    return scale * l2_normalize(features) @ subject_embeddings.T


def topk_rows(logits: Tensor, k: int) -> Tuple[Tensor, Tensor, Tensor]:
    """Rows with the k largest max-over-classes logits.

    Returns (rows, matched_class, row_max) in selection order. Ties go to
    the lower row, and within a row to the lower class.
    """
    m, n = logits.shape
    if k <= 0:
        raise SelectionError("k must be positive", k=k)
    if k > m:
        raise SelectionError("k exceeds the number of candidate cells", k=k, m=m)
    values = logits.detach()
    row_max = values.max(dim=1).values
    class_index = torch.arange(n).expand(m, n)
    matched = torch.where(values == row_max[:, None], class_index, n).min(dim=1).values
    order = torch.sort(row_max, descending=True, stable=True).indices[:k]
    return order, matched[order], row_max[order]


def select_topk(logits: Tensor, features: Tensor, k: int, grid_width: int) -> List[QueryCandidate]:
    rows, matched, row_max = topk_rows(logits, k)
    return [
        QueryCandidate(
            embedding=features[int(r)],
            matched_class=int(c),
            source_cell=divmod(int(r), grid_width),
            selection_logit=float(v),
            row=int(r),
        )
        for r, c, v in zip(rows, matched, row_max)
    ]


def activation_extents(
    affinity: Tensor,
    rows: Tensor,
    grid_shape: Tuple[int, int],
    ratio: float = 0.5,
    floor: float = 0.05,
) -> Tensor:
    """Reference boxes (k, 4) spanning the activated region around each seed cell.

    ``affinity`` is (m, k): column j scores every cell against the class
    query j was matched to. The region is the 4-connected component of cells
    scoring at least ``ratio`` times the seed; a seed at or below ``floor``
    keeps only its own cell. Boxes follow cell edges, as (cx, cy, w, h).
    """
    height, width = grid_shape
    if affinity.shape[0] != height * width:
        raise DimensionMismatchError("Affinity rows do not cover the grid", rows=affinity.shape[0], grid=grid_shape)
    values = affinity.detach().cpu().numpy()
    boxes = []
    for j, row in enumerate(rows.tolist()):
        r, c = divmod(int(row), width)
        plane = values[:, j].reshape(height, width)
        seed = plane[r, c]
        if seed > floor:
            labels, _ = ndimage.label(plane >= ratio * seed)
            ys, xs = np.nonzero(labels == labels[r, c])
        else:
            ys, xs = np.array([r]), np.array([c])
        x0, x1 = xs.min() / width, (xs.max() + 1) / width
        y0, y1 = ys.min() / height, (ys.max() + 1) / height
        boxes.append(((x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0))
    return torch.tensor(boxes, dtype=DTYPE).reshape(-1, 4)


def pad_attributes(attributes: List[Tensor], dim: int) -> Tuple[Tensor, Tensor]:
    """Stack ragged per-class attribute embeddings into (n, A, d) plus a mask."""
    width = max((int(a.shape[0]) for a in attributes), default=0)
    padded = torch.zeros(len(attributes), width, dim, dtype=DTYPE)
    mask = torch.zeros(len(attributes), width, dtype=torch.bool)
    for i, a in enumerate(attributes):
        count = int(a.shape[0])
        if count:
            padded[i, :count] = a
            mask[i, :count] = True
    return padded, mask


def subject_slots(mask: Tensor) -> Tensor:
    """Slot mask (k, 1 + A) with the subject slot always present, even when A is 0."""
    subject = torch.ones(mask.shape[0], 1, dtype=torch.bool, device=mask.device)
    return torch.cat([subject, mask.to(torch.bool)], dim=1)


def coarse_scores(p: Tensor, subject_embeddings: Tensor, m_coarse: float) -> Tuple[Tensor, Tensor]:
    """Logits m_coarse * cos(p, t_i) and their sigmoid scores."""
    squeeze = p.dim() == 1
    logits = classify(subject_embeddings, p[None] if squeeze else p, m_coarse)
    scores = torch.sigmoid(clamp_logits(logits))
    if squeeze:
        return logits[0], scores[0]
    return logits, scores


class AttributeFusion(nn.Module):
    """Attribute-embedding fusion into object queries.

    A shared learnable query attends over the slots {subject} + attributes
    of the matched class. In ``subtract`` mode keys are ``t^j - t`` (the
    subject slot gets a zero key); ``no_subtract`` uses the raw embeddings as
    keys; ``addition`` and ``concatenation`` replace attention by a masked
    mean of the values.
    """

    MODES = ("subtract", "no_subtract", "addition", "concatenation")

    def __init__(self, dim: int, mode: str = "subtract"):
        super().__init__()
        if mode not in self.MODES:
            raise ValueError(f"Unknown fusion mode: {mode}")
        self.dim = dim
        self.mode = mode
        self.scale = 1.0 / math.sqrt(dim)
        self.learnable_query = nn.Parameter(torch.zeros(dim, dtype=DTYPE))
        self.query_proj = nn.Linear(dim, dim, bias=False, dtype=DTYPE)
        self.key_proj = nn.Linear(dim, dim, bias=False, dtype=DTYPE)
        self.value_proj = nn.Linear(dim, dim, bias=False, dtype=DTYPE)
        self.out_proj = nn.Linear(dim, dim, bias=False, dtype=DTYPE)
        if mode == "concatenation":
            self.concat_proj = nn.Linear(2 * dim, dim, bias=False, dtype=DTYPE)

    def slot_weights(self, subjects: Tensor, attributes: Tensor, mask: Tensor) -> Tensor:
        """Softmax weights over the 1 + A slots, shape (k, 1 + A)."""
        values = torch.cat([subjects[:, None, :], attributes], dim=1)
        keys = values - subjects[:, None, :] if self.mode == "subtract" else values
        query = self.query_proj(self.learnable_query)
        scores = clamp_logits((self.key_proj(keys) @ query) * self.scale)
        slots = subject_slots(mask)
        scores = scores.masked_fill(~slots, float("-inf"))
        return torch.softmax(scores, dim=1)

    def forward(self, q: Tensor, subjects: Tensor, attributes: Tensor, mask: Tensor) -> Tensor:
        """q (k, d); subjects (k, d); attributes (k, A, d); mask (k, A)."""
        values = torch.cat([subjects[:, None, :], attributes], dim=1)
        slots = subject_slots(mask).to(values.dtype)
        if self.mode in ("subtract", "no_subtract"):
            weights = self.slot_weights(subjects, attributes, mask)
            attended = (weights[..., None] * self.value_proj(values)).sum(dim=1)
            return q + self.out_proj(attended)
        mean = (slots[..., None] * values).sum(dim=1) / slots.sum(dim=1, keepdim=True)
        if self.mode == "addition":
            return q + self.out_proj(self.value_proj(mean))
        return q + self.concat_proj(torch.cat([q, mean], dim=-1))


def attribute_fuse(q: Tensor, params: AttributeFusion, subject: Tensor, attributes: Tensor) -> Tensor:
    """Fuse one query with one class's subject (d,) and attributes (n_j, d)."""
    mask = torch.ones(1, attributes.shape[0], dtype=torch.bool)
    return params(q[None], subject[None], attributes[None], mask)[0]


def with_pos_embed(tensor: Tensor, pos: Optional[Tensor]) -> Tensor:
    return tensor if pos is None else tensor + pos


class FeedForward(nn.Module):
    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.linear1 = nn.Linear(dim, hidden, dtype=DTYPE)
        self.linear2 = nn.Linear(hidden, dim, dtype=DTYPE)

    def forward(self, x: Tensor) -> Tensor:
        return self.linear2(F.gelu(self.linear1(x)))


class SingleHeadAttention(nn.Module):
    """Scaled dot-product attention with q/k/v/out projections."""

    def __init__(self, dim: int):
        super().__init__()
        self.scale = 1.0 / math.sqrt(dim)
        self.q_proj = nn.Linear(dim, dim, dtype=DTYPE)
        self.k_proj = nn.Linear(dim, dim, dtype=DTYPE)
        self.v_proj = nn.Linear(dim, dim, dtype=DTYPE)
        self.out_proj = nn.Linear(dim, dim, dtype=DTYPE)

    def forward(self, query: Tensor, key: Tensor, value: Tensor) -> Tensor:
        scores = clamp_logits(self.q_proj(query) @ self.k_proj(key).T * self.scale)
        return self.out_proj(torch.softmax(scores, dim=-1) @ self.v_proj(value))


class EncoderLayer(nn.Module):
    """Self-attention over grid cells; position added to queries and keys only."""

    def __init__(self, dim: int, ffn_dim: int):
        super().__init__()
        self.self_attn = SingleHeadAttention(dim)
        self.ffn = FeedForward(dim, ffn_dim)

    def forward(self, src: Tensor, pos: Optional[Tensor] = None) -> Tensor:
        qk = with_pos_embed(src, pos)
        src = src + self.self_attn(qk, qk, src)
        return src + self.ffn(src)


class FeatureRefiner(nn.Module):
    """Transformer encoder refining F_conv into F_enc; zero layers is identity."""

    def __init__(self, dim: int, ffn_dim: int, num_layers: int):
        super().__init__()
        self.layers = nn.ModuleList(EncoderLayer(dim, ffn_dim) for _ in range(num_layers))

    def forward(self, src: Tensor, pos: Optional[Tensor] = None) -> Tensor:
        for layer in self.layers:
            src = layer(src, pos)
        return src


class DecoderLayer(nn.Module):
    """Cross-attention from each query to the encoder memory, then FFN.

    No self-attention between queries. Memory positions enter keys and
    values, so attended outputs carry where the matching cells are.
    """

    def __init__(self, dim: int, ffn_dim: int):
        super().__init__()
        self.cross_attn = SingleHeadAttention(dim)
        self.ffn = FeedForward(dim, ffn_dim)

    def forward(
        self,
        tgt: Tensor,
        memory: Tensor,
        query_pos: Optional[Tensor] = None,
        pos: Optional[Tensor] = None,
    ) -> Tensor:
        memory_pos = with_pos_embed(memory, pos)
        tgt = tgt + self.cross_attn(with_pos_embed(tgt, query_pos), memory_pos, memory_pos)
        return tgt + self.ffn(tgt)


class BoxHead(nn.Module):
    """Three affine layers predicting a refinement of the reference box."""

    def __init__(self, dim: int, hidden: int, num_layers: int = 3):
        super().__init__()
        dims = [dim] + [hidden] * (num_layers - 1) + [4]
        self.layers = nn.ModuleList(
            nn.Linear(d_in, d_out, dtype=DTYPE) for d_in, d_out in zip(dims[:-1], dims[1:])
        )

    def forward(self, x: Tensor, reference: Tensor, query_pos: Optional[Tensor] = None) -> Tensor:
        x = with_pos_embed(x, query_pos)
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = F.gelu(x)
        return torch.sigmoid((x + inverse_sigmoid(reference)).clamp(-LOGIT_BOUND, LOGIT_BOUND))
