"""
Fine-grained attribute discrimination.

Predicted boxes are pooled from the frozen feature map, compared with the
refined full-name embeddings, and the resulting fine scores are fused with
the detector's coarse confidence.
"""

import dataclasses
from typing import List, Optional, Protocol, Sequence, Tuple

import structlog
import torch
from torch import Tensor

from app.core.config import FusionConfig
from app.core.errors import DegenerateBoxError, RegionPoolingError
from app.modules.cgod.types import Prediction
from app.modules.encoders.backends import cells_inside
from app.modules.encoders.types import SpatialFeatureMap
from app.utils.tensor_utils import LOG_FLOOR, box_iou, l2_normalize

from .types import RegionFeature, ScoringContext

logger = structlog.get_logger(__name__)

_TINY = torch.finfo(torch.float64).tiny


def pool_region(fmap: SpatialFeatureMap, box: Sequence[float], pooling: str = "mean") -> RegionFeature:
    """Pool the cells whose centers fall inside the box, then normalize."""
    cx, cy, w, h = (float(v) for v in box)
    if w <= 0.0 or h <= 0.0:
        raise DegenerateBoxError("Box has zero extent", box=(cx, cy, w, h))
    rows, cols = fmap.grid_shape
    mask = cells_inside(fmap.cell_centers().reshape(rows, cols, 2), (cx, cy, w, h))
    cells = fmap.features[mask]
    pooled = cells.max(dim=0).values if pooling == "max" else cells.mean(dim=0)
    if float(pooled.norm()) < 1e-12:
        raise RegionPoolingError("Pooled region feature cannot be normalized", box=(cx, cy, w, h))
    return RegionFeature(vector=l2_normalize(pooled), box=(cx, cy, w, h), cell_count=int(mask.sum()))


def fine_scores(region: Tensor, refined_full: Tensor, m_fine: float) -> Tuple[Tensor, Tensor]:
    """Logits m_fine * cos(region, t'_i) and their softmax over classes.

    ``region`` is one (d,) vector or a (k, d) batch.
    """
    logits = m_fine * l2_normalize(region) @ refined_full.T
    return logits, torch.softmax(logits, dim=-1)


def fuse_scores(s_coarse: Tensor, s_fine: Tensor, alpha: float, strategy: str = "multiply") -> Tensor:
    """Weighted geometric mean (default) or weighted arithmetic mean."""
    if strategy == "weighted_average":
        return alpha * s_coarse + (1.0 - alpha) * s_fine
    if alpha == 1.0:
        return s_coarse
    log_coarse = torch.log(s_coarse.clamp_min(_TINY))
    log_fine = torch.log(s_fine.clamp_min(LOG_FLOOR))
    return torch.exp(alpha * log_coarse + (1.0 - alpha) * log_fine)


class FineScorer(Protocol):
    def score(self, fmap: SpatialFeatureMap, boxes: Tensor, context: ScoringContext) -> Tuple[Tensor, List[bool]]:
        """(k, n) fine scores and a per-box fallback flag."""
        ...


class CosineFineScorer:
    """Pooled region features against refined full-name embeddings."""

    def __init__(self, m_fine: float = 100.0, pooling: str = "mean"):
        self.m_fine = m_fine
        self.pooling = pooling

    def score(self, fmap: SpatialFeatureMap, boxes: Tensor, context: ScoringContext) -> Tuple[Tensor, List[bool]]:
        n = context.refined_full.shape[0]
        rows = []
        flags = []
        for box in boxes:
            try:
                region = pool_region(fmap, box.tolist(), self.pooling)
            except (RegionPoolingError, DegenerateBoxError) as e:
                logger.warning("Region pooling failed, using uniform fine scores", error=str(e))
                rows.append(torch.full((n,), 1.0 / n, dtype=context.refined_full.dtype))
                flags.append(True)
                continue
            rows.append(fine_scores(region.vector, context.refined_full, self.m_fine)[1])
            flags.append(False)
        return torch.stack(rows), flags


def score_predictions(
    predictions: List[Prediction],
    fmap: SpatialFeatureMap,
    refined_full: Tensor,
    config: Optional[FusionConfig] = None,
    scorer: Optional[FineScorer] = None,
    class_names: Sequence[str] = (),
    image_id: Optional[str] = None,
) -> List[Prediction]:
    """Attach s_fine and s_final to every prediction, keeping order."""
    config = config or FusionConfig()
    if not predictions:
        return []
    scorer = scorer or CosineFineScorer(config.m_fine, config.pooling)
    boxes = torch.stack([p.box for p in predictions])
    context = ScoringContext(refined_full=refined_full, class_names=class_names, image_id=image_id)
    with torch.no_grad():
        s_fine, flags = scorer.score(fmap, boxes, context)
        scored = []
        for j, prediction in enumerate(predictions):
            s_final = fuse_scores(prediction.coarse_scores, s_fine[j], config.alpha, config.strategy)
            scored.append(
                dataclasses.replace(prediction, s_fine=s_fine[j], s_final=s_final, fine_fallback=flags[j])
            )
    return scored


def suppress_duplicates(predictions: List[Prediction], iou_threshold: float) -> List[Prediction]:
    """Greedy non-maximum suppression ranked by each prediction's best fused score.

    A prediction is dropped when it overlaps a higher-ranked survivor by
    more than ``iou_threshold``. Survivors keep their input order.
    """
    if len(predictions) < 2:
        return list(predictions)
    if any(p.s_final is None for p in predictions):
        raise ValueError("suppress_duplicates needs fused scores")
    best = torch.stack([p.s_final.max() for p in predictions])
    boxes = torch.stack([p.box for p in predictions])
    overlap = box_iou(boxes, boxes)
    order = torch.sort(best, descending=True, stable=True).indices.tolist()
    suppressed = [False] * len(predictions)
    for rank, i in enumerate(order):
        if suppressed[i]:
            continue
        for j in order[rank + 1:]:
            if not suppressed[j] and float(overlap[i, j]) > iou_threshold:
                suppressed[j] = True
    kept = [p for p, dropped in zip(predictions, suppressed) if not dropped]
    logger.debug("Duplicates suppressed", before=len(predictions), after=len(kept))
    return kept
