"""
Bipartite matching between predictions and ground-truth boxes.
"""

import numpy as np
import torch
from scipy.optimize import linear_sum_assignment

from app.core.errors import MatchingError
from app.utils.tensor_utils import LOG_FLOOR, box_iou

from .types import Assignment


def matching_cost(
    coarse_scores: torch.Tensor,
    boxes: torch.Tensor,
    gt_boxes: torch.Tensor,
    gt_columns: torch.Tensor,
    box_weight: float = 5.0,
) -> np.ndarray:
    """(k, g) cost: -log s_coarse[gt column] + box_weight * L1(box, gt box)."""
    with torch.no_grad():
        cls_cost = -torch.log(coarse_scores[:, gt_columns].clamp_min(LOG_FLOOR))
        box_cost = torch.cdist(boxes, gt_boxes, p=1)
        return (cls_cost + box_weight * box_cost).cpu().numpy()


def match_predictions(
    coarse_scores: torch.Tensor,
    boxes: torch.Tensor,
    gt_boxes: torch.Tensor,
    gt_columns: torch.Tensor,
    box_weight: float = 5.0,
) -> Assignment:
    """Minimum-cost one-to-one assignment (Hungarian)."""
    k = int(boxes.shape[0])
    g = int(gt_boxes.shape[0])
    if k == 0:
        raise MatchingError("Matching needs at least one prediction")
    if g > k:
        raise MatchingError("More ground truths than predictions", predictions=k, ground_truths=g)
    if g == 0:
        empty = np.zeros(0, dtype=np.int64)
        return Assignment(pred_indices=empty, gt_indices=empty, cost=0.0)
    cost = matching_cost(coarse_scores, boxes, gt_boxes, gt_columns, box_weight)
    rows, cols = linear_sum_assignment(cost)
    return Assignment(pred_indices=rows, gt_indices=cols, cost=float(cost[rows, cols].sum()))


def overlap_positives(
    boxes: torch.Tensor,
    gt_boxes: torch.Tensor,
    assignment: Assignment,
    iou_threshold: float,
) -> Assignment:
    """Unmatched predictions overlapping a ground truth by at least ``iou_threshold``.

    Each is paired with the ground truth it overlaps most and takes that
    ground truth's classification target instead of background.
    """
    empty = np.zeros(0, dtype=np.int64)
    if gt_boxes.shape[0] == 0:
        return Assignment(pred_indices=empty, gt_indices=empty, cost=0.0)
    with torch.no_grad():
        overlap = box_iou(boxes.detach(), gt_boxes)
    best, gt = overlap.max(dim=1)
    unmatched = torch.ones(boxes.shape[0], dtype=torch.bool)
    unmatched[torch.as_tensor(assignment.pred_indices, dtype=torch.long)] = False
    keep = unmatched & (best >= iou_threshold)
    pred = torch.nonzero(keep).flatten()
    return Assignment(pred_indices=pred.numpy(), gt_indices=gt[pred].numpy(), cost=0.0)
