import itertools

import numpy as np
import pytest
import torch

from app.core.errors import MatchingError
from app.modules.training.matcher import match_predictions, matching_cost, overlap_positives
from app.modules.training.types import Assignment
from app.utils.tensor_utils import DTYPE


def random_problem(k: int, g: int, n: int = 4, seed: int = 0):
    generator = torch.Generator().manual_seed(seed)
    scores = torch.rand(k, n, generator=generator, dtype=DTYPE)
    boxes = torch.rand(k, 4, generator=generator, dtype=DTYPE) * 0.5 + 0.25
    gt_boxes = torch.rand(g, 4, generator=generator, dtype=DTYPE) * 0.5 + 0.25
    columns = torch.randint(0, n, (g,), generator=generator)
    return scores, boxes, gt_boxes, columns


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_assignment_is_minimal(seed):
    scores, boxes, gt_boxes, columns = random_problem(6, 3, seed=seed)
    assignment = match_predictions(scores, boxes, gt_boxes, columns)
    cost = matching_cost(scores, boxes, gt_boxes, columns)
    best = min(
        sum(cost[p, j] for j, p in enumerate(perm)) for perm in itertools.permutations(range(6), 3)
    )
    assert assignment.cost == pytest.approx(best, abs=1e-9)
    assert len(assignment) == 3
    assert len(set(assignment.pred_indices.tolist())) == 3
    assert sorted(assignment.gt_indices.tolist()) == [0, 1, 2]


def test_cost_combines_class_and_box_terms():
    scores = torch.tensor([[0.5, 0.25]], dtype=DTYPE)
    boxes = torch.tensor([[0.5, 0.5, 0.2, 0.2]], dtype=DTYPE)
    gt = torch.tensor([[0.6, 0.5, 0.2, 0.1]], dtype=DTYPE)
    cost = matching_cost(scores, boxes, gt, torch.tensor([1]), box_weight=2.0)
    assert cost[0, 0] == pytest.approx(-np.log(0.25) + 2.0 * 0.2)


def test_more_ground_truths_than_predictions():
    scores, boxes, gt_boxes, columns = random_problem(2, 3)
    with pytest.raises(MatchingError):
        match_predictions(scores, boxes, gt_boxes, columns)


def test_no_ground_truth_means_no_pairs():
    scores, boxes, _, _ = random_problem(4, 1)
    assignment = match_predictions(scores, boxes, torch.zeros(0, 4, dtype=DTYPE), torch.zeros(0, dtype=torch.long))
    assert len(assignment) == 0
    assert assignment.cost == 0.0


def test_no_predictions():
    with pytest.raises(MatchingError):
        match_predictions(
            torch.zeros(0, 2, dtype=DTYPE), torch.zeros(0, 4, dtype=DTYPE), torch.zeros(0, 4), torch.zeros(0)
        )


def test_overlap_positives_pair_unmatched_duplicates_with_their_object():
    boxes = torch.tensor(
        [[0.3, 0.3, 0.2, 0.2], [0.31, 0.3, 0.2, 0.2], [0.7, 0.7, 0.2, 0.2], [0.3, 0.3, 0.05, 0.05]], dtype=DTYPE
    )
    gt_boxes = torch.tensor([[0.3, 0.3, 0.2, 0.2], [0.7, 0.72, 0.2, 0.2]], dtype=DTYPE)
    assignment = Assignment(pred_indices=np.array([0]), gt_indices=np.array([0]), cost=0.0)
    extra = overlap_positives(boxes, gt_boxes, assignment, 0.5)
    assert extra.pred_indices.tolist() == [1, 2]
    assert extra.gt_indices.tolist() == [0, 1]


def test_overlap_positives_without_ground_truth_is_empty():
    empty = np.zeros(0, dtype=np.int64)
    boxes = torch.rand(3, 4, dtype=DTYPE)
    extra = overlap_positives(boxes, torch.zeros(0, 4, dtype=DTYPE), Assignment(empty, empty, 0.0), 0.5)
    assert len(extra) == 0
