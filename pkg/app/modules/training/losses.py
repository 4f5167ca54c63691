"""
Set-detection losses and the fine-grained binary loss.
"""

from typing import List, Optional, Tuple

import torch
import torch.nn.functional as F
from torch import Tensor

from app.utils.tensor_utils import DTYPE, LOG_FLOOR

from .types import Assignment


def detection_loss(
    coarse_logits: Tensor,
    boxes: Tensor,
    gt_boxes: Tensor,
    gt_targets: Tensor,
    assignment: Assignment,
    extra_positives: Optional[Assignment] = None,
) -> Tuple[Tensor, Tensor]:
    """Classification BCE over every prediction and L1 on matched boxes.

    Matched predictions take their ground truth's target row; so do
    ``extra_positives``, in the classification term only. The rest are
    background with an all-zero target. Both terms are normalized by the
    number of ground truths (at least 1).
    """
    k, n = coarse_logits.shape
    num_gt = max(int(gt_boxes.shape[0]), 1)
    target = torch.zeros(k, n, dtype=coarse_logits.dtype)
    pred = torch.as_tensor(assignment.pred_indices, dtype=torch.long)
    gt = torch.as_tensor(assignment.gt_indices, dtype=torch.long)
    if extra_positives is not None and len(extra_positives):
        extra = torch.as_tensor(extra_positives.pred_indices, dtype=torch.long)
        target[extra] = gt_targets[torch.as_tensor(extra_positives.gt_indices, dtype=torch.long)].to(target.dtype)
    if len(assignment):
        target[pred] = gt_targets[gt].to(coarse_logits.dtype)
    loss_cls = F.binary_cross_entropy_with_logits(coarse_logits, target, reduction="sum") / num_gt
    if len(assignment):
        loss_box = (boxes[pred] - gt_boxes[gt]).abs().sum() / num_gt
    else:
        loss_box = boxes.sum() * 0.0
    return loss_cls, loss_box


def fine_loss(s_coarse: Tensor, s_fine: Tensor, gt_fine_ids: Tensor, alpha: float) -> Tensor:
    """-sum_j log(s_coarse[gt]^alpha * s_fine[gt]^(1 - alpha)), evaluated in log space.

    ``s_coarse`` and ``s_fine`` are (m, n) scores of the matched predictions;
    ``gt_fine_ids`` holds each one's fine-grained class.
    """
    if s_coarse.shape[0] == 0:
        return torch.zeros((), dtype=s_coarse.dtype)
    rows = torch.arange(s_coarse.shape[0])
    coarse = s_coarse[rows, gt_fine_ids].clamp_min(LOG_FLOOR)
    fine = s_fine[rows, gt_fine_ids].clamp_min(LOG_FLOOR)
    return -(alpha * torch.log(coarse) + (1.0 - alpha) * torch.log(fine)).sum()


def target_rows(
    vocabulary_subjects: List[str],
    subjects: List[str],
    gt_subject_ids: List[int],
    gt_fine_ids: List[int],
    classifier_kind: str,
) -> Tuple[Tensor, Tensor]:
    """Per ground truth: the cost column and the (n,) BCE target row.

    With subject classifiers every column sharing the subject is positive
    (those columns carry the same weights); otherwise only the exact class.
    """
    n = len(vocabulary_subjects)
    columns: List[int] = []
    rows: List[Tensor] = []
    for subject_id, fine_id in zip(gt_subject_ids, gt_fine_ids):
        if classifier_kind == "subject":
            subject = subjects[subject_id]
            mask = torch.tensor([s == subject for s in vocabulary_subjects], dtype=DTYPE)
            columns.append(vocabulary_subjects.index(subject))
        else:
            mask = torch.zeros(n, dtype=DTYPE)
            mask[fine_id] = 1.0
            columns.append(fine_id)
        rows.append(mask)
    targets = torch.stack(rows) if rows else torch.zeros(0, n, dtype=DTYPE)
    return torch.tensor(columns, dtype=torch.long), targets
