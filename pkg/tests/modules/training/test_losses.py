import math

import numpy as np
import pytest
import torch

from app.modules.fgad.service import fuse_scores
from app.modules.training.losses import detection_loss, fine_loss, target_rows
from app.modules.training.types import Assignment
from app.utils.tensor_utils import DTYPE


def test_fine_loss_is_negative_log_of_fused_score():
    generator = torch.Generator().manual_seed(4)
    s_coarse = torch.rand(3, 5, generator=generator, dtype=DTYPE) * 0.9 + 0.05
    s_fine = torch.softmax(torch.randn(3, 5, generator=generator, dtype=DTYPE), dim=-1)
    gt = torch.tensor([0, 3, 4])
    for alpha in (0.0, 0.6, 1.0):
        expected = -sum(
            math.log(float(fuse_scores(s_coarse[j], s_fine[j], alpha)[int(gt[j])])) for j in range(3)
        )
        assert float(fine_loss(s_coarse, s_fine, gt, alpha)) == pytest.approx(expected, abs=1e-9)


def test_fine_loss_without_matches_is_zero():
    empty = torch.zeros(0, 3, dtype=DTYPE)
    assert float(fine_loss(empty, empty, torch.zeros(0, dtype=torch.long), 0.6)) == 0.0


def test_background_only_classification_loss():
    k, n = 4, 3
    logits = torch.zeros(k, n, dtype=DTYPE)
    boxes = torch.full((k, 4), 0.5, dtype=DTYPE, requires_grad=True)
    empty = np.zeros(0, dtype=np.int64)
    loss_cls, loss_box = detection_loss(
        logits, boxes, torch.zeros(0, 4, dtype=DTYPE), torch.zeros(0, n, dtype=DTYPE), Assignment(empty, empty, 0.0)
    )
    assert float(loss_cls) == pytest.approx(k * n * math.log(2.0))
    assert float(loss_box) == 0.0
    loss_box.backward()
    assert boxes.grad is not None


def test_matched_prediction_takes_its_target_row():
    logits = torch.tensor([[2.0, -1.0], [0.5, 1.5]], dtype=DTYPE)
    boxes = torch.tensor([[0.5, 0.5, 0.2, 0.2], [0.3, 0.3, 0.1, 0.1]], dtype=DTYPE)
    gt_boxes = torch.tensor([[0.4, 0.3, 0.1, 0.2]], dtype=DTYPE)
    targets = torch.tensor([[0.0, 1.0]], dtype=DTYPE)
    assignment = Assignment(np.array([1]), np.array([0]), 0.0)
    loss_cls, loss_box = detection_loss(logits, boxes, gt_boxes, targets, assignment)

    def bce(x, t):
        return math.log1p(math.exp(x)) - t * x

    expected = bce(2.0, 0) + bce(-1.0, 0) + bce(0.5, 0) + bce(1.5, 1)
    assert float(loss_cls) == pytest.approx(expected)
    assert float(loss_box) == pytest.approx(0.1 + 0.0 + 0.0 + 0.1)


def test_target_rows_with_subject_classifiers():
    columns, rows = target_rows(["cup", "cup", "bowl"], ["cup", "bowl"], [0, 1], [1, 2], "subject")
    assert columns.tolist() == [0, 2]
    assert rows.tolist() == [[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]]


def test_target_rows_with_full_name_classifiers():
    columns, rows = target_rows(["cup", "cup", "bowl"], ["cup", "bowl"], [0, 1], [1, 2], "full")
    assert columns.tolist() == [1, 2]
    assert rows.tolist() == [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]


def test_target_rows_without_ground_truth():
    columns, rows = target_rows(["cup"], ["cup"], [], [], "subject")
    assert columns.numel() == 0
    assert tuple(rows.shape) == (0, 1)


def test_extra_positives_share_the_classification_target_only():
    logits = torch.zeros(3, 2, dtype=DTYPE)
    boxes = torch.full((3, 4), 0.5, dtype=DTYPE)
    gt_boxes = torch.tensor([[0.5, 0.5, 0.2, 0.2]], dtype=DTYPE)
    targets = torch.tensor([[1.0, 0.0]], dtype=DTYPE)
    matched = Assignment(np.array([0]), np.array([0]), 0.0)
    extra = Assignment(np.array([1]), np.array([0]), 0.0)
    plain_cls, plain_box = detection_loss(logits, boxes, gt_boxes, targets, matched)
    loss_cls, loss_box = detection_loss(logits, boxes, gt_boxes, targets, matched, extra)
    # at logit 0 the BCE is ln 2 whatever the target; the box term ignores extra positives
    assert float(loss_cls) == pytest.approx(float(plain_cls))
    assert float(loss_box) == pytest.approx(float(plain_box))
    shifted = torch.tensor([[0.0, 0.0], [3.0, -3.0], [0.0, 0.0]], dtype=DTYPE)
    with_extra, _ = detection_loss(shifted, boxes, gt_boxes, targets, matched, extra)
    without, _ = detection_loss(shifted, boxes, gt_boxes, targets, matched)
    assert float(with_extra) < float(without)
