"""
Coarse-grained detector: feature refinement, query selection, attribute
fusion, decoding and coarse scoring.
"""

from typing import List, Optional, Tuple

import torch
from torch import Tensor, nn

from app.core.config import ModelConfig
from app.core.errors import DimensionMismatchError, SelectionError
from app.modules.encoders.types import SpatialFeatureMap
from app.utils.tensor_utils import DTYPE, clamp_logits, sine_position_encoding

from .layers import (
    AttributeFusion,
    BoxHead,
    DecoderLayer,
    FeatureRefiner,
    activation_extents,
    classify,
    pad_attributes,
    topk_rows,
)
from .types import DetectorOutput, FeatureContext


class GuidedDetector(nn.Module):
    def __init__(self, dim: int, config: Optional[ModelConfig] = None):
        super().__init__()
        self.config = config or ModelConfig()
        self.dim = dim
        cfg = self.config
        self.refiner = FeatureRefiner(dim, cfg.ffn_dim, cfg.encoder_layers)
        self.fusion = AttributeFusion(dim, cfg.aef_mode) if cfg.aef_mode != "none" else None
        self.decoder = nn.ModuleList(DecoderLayer(dim, cfg.ffn_dim) for _ in range(cfg.decoder_layers))
        self.box_head = BoxHead(dim, cfg.ffn_dim)
        self.reset_parameters(cfg.init_seed)

    def reset_parameters(self, seed: int) -> None:
        """Weights ~ N(0, init_std) from a seeded generator, biases zero."""
        generator = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for name, param in self.named_parameters():
                if name.endswith("bias"):
                    param.zero_()
                else:
                    param.copy_(torch.randn(param.shape, generator=generator, dtype=DTYPE) * self.config.init_std)

    def encode_features(self, fmap: SpatialFeatureMap) -> FeatureContext:
        if fmap.dim != self.dim:
            raise DimensionMismatchError("Feature map dimension differs from the detector", got=fmap.dim, dim=self.dim)
        conv = fmap.flat().to(DTYPE)
        centers = fmap.cell_centers()
        pos = sine_position_encoding(centers, self.dim)
        enc = self.refiner(conv, pos)
        return FeatureContext(conv=conv, enc=enc, centers=centers, pos=pos, grid_width=fmap.grid_shape[1])

    def reference_boxes(self, selection: Tensor, rows: Tensor, matched: Tensor, ctx: FeatureContext) -> Tensor:
        """Reference box per selected cell.

        ``fixed`` centres a reference_size square on the cell; ``extent``
        covers the region activated by the query's matched class.
        """
        if self.config.reference == "fixed":
            size = torch.full((rows.shape[0], 2), self.config.reference_size, dtype=DTYPE)
            return torch.cat([ctx.centers[rows], size], dim=1)
        affinity = selection.detach()[:, matched] / self.config.m_coarse
        return activation_extents(
            affinity, rows, ctx.grid_shape, self.config.extent_ratio, self.config.extent_floor
        )

    def decode(self, queries: Tensor, reference: Tensor, ctx: FeatureContext) -> Tuple[Tensor, Tensor]:
        """Per-query decoding to prediction embeddings and boxes refining ``reference``."""
        if queries.shape[0] == 0:
            raise SelectionError("decode needs at least one query")
        query_pos = sine_position_encoding(reference[:, :2], self.dim)
        p = queries
        for layer in self.decoder:
            p = layer(p, ctx.enc, query_pos, ctx.pos)
        return p, self.box_head(p, reference, query_pos)

    def forward(
        self,
        ctx: FeatureContext,
        classifier: Tensor,
        attributes: List[Tensor],
    ) -> DetectorOutput:
        """Detect against a vocabulary.

        ``classifier`` holds the (n, d) embeddings used both as frozen
        classifier weights and as the subject slot of attribute fusion;
        ``attributes`` holds each class's (n_j, d) attribute embeddings.
        """
        n = classifier.shape[0]
        if n == 0:
            raise SelectionError("Vocabulary is empty")
        m_coarse = self.config.m_coarse
        selection = classify(classifier, ctx.enc, m_coarse)
        k = min(self.config.k, ctx.enc.shape[0])
        rows, matched, row_max = topk_rows(selection, k)

        queries = ctx.enc[rows]
        if self.fusion is not None:
            padded, mask = pad_attributes(attributes, self.dim)
            queries = self.fusion(queries, classifier[matched], padded[matched], mask[matched])

        reference = self.reference_boxes(selection, rows, matched, ctx)
        embeddings, boxes = self.decode(queries, reference, ctx)
        logits = classify(classifier, embeddings, m_coarse)
        return DetectorOutput(
            embeddings=embeddings,
            boxes=boxes,
            coarse_logits=logits,
            coarse_scores=torch.sigmoid(clamp_logits(logits)),
            rows=rows,
            matched=matched,
            selection_logits=row_max,
            references=reference,
        )
