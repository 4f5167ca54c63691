"""
Average precision over per-annotation caption sets.

Every annotation is evaluated against its own vocabulary (positive plus hard
negatives). Predictions are ranked by their fused score for the positive
caption; a prediction is a true positive when it overlaps the ground truth
and ranks the positive caption first.
"""

from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import structlog

from app.core.errors import DegenerateBoxError, EvaluationError

from .types import AnnotationRecord, APResult, PredictionRecord, ScoredBox, TrackResult

logger = structlog.get_logger(__name__)

SWEEP_THRESHOLDS = tuple(np.round(np.arange(0.5, 0.951, 0.05), 2))


def to_corners(box: Sequence[float]) -> Tuple[float, float, float, float]:
    cx, cy, w, h = (float(v) for v in box)
    if w <= 0.0 or h <= 0.0:
        raise DegenerateBoxError("Box has zero extent", box=(cx, cy, w, h))
    return cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2


def iou(box_a: Sequence[float], box_b: Sequence[float]) -> float:
    """Intersection over union of two (cx, cy, w, h) boxes."""
    ax0, ay0, ax1, ay1 = to_corners(box_a)
    bx0, by0, bx1, by1 = to_corners(box_b)
    inter_w = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    inter_h = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = inter_w * inter_h
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union if union > 0.0 else 0.0


def is_hit(prediction: ScoredBox, annotation: AnnotationRecord, iou_threshold: float) -> bool:
    """Localized and the positive caption wins the argmax (lowest index on ties)."""
    if int(np.argmax(prediction.s_final)) != annotation.positive_index:
        return False
    return iou(prediction.box, annotation.gt_box) >= iou_threshold


def operating_points(tp: np.ndarray, scores: np.ndarray, num_gt: int) -> Tuple[np.ndarray, np.ndarray]:
    """Recall and precision at every distinct score cutoff, highest first."""
    if num_gt <= 0:
        raise EvaluationError("AP needs at least one ground truth")
    if len(scores) == 0:
        return np.zeros(0), np.zeros(0)
    order = np.argsort(-scores, kind="stable")
    tp = tp[order].astype(np.float64)
    scores = scores[order]
    cum_tp = np.cumsum(tp)
    cum_fp = np.cumsum(1.0 - tp)
    # last index of every run of equal scores
    ends = np.flatnonzero(np.r_[scores[1:] != scores[:-1], True])
    recall = cum_tp[ends] / num_gt
    precision = cum_tp[ends] / (cum_tp[ends] + cum_fp[ends])
    return recall, precision


def average_precision(tp: np.ndarray, scores: np.ndarray, num_gt: int) -> float:
    """All-point interpolated AP; tied scores form one operating point."""
    recall, precision = operating_points(tp, scores, num_gt)
    if len(recall) == 0:
        return 0.0
    mrec = np.concatenate([[0.0], recall])
    mpre = np.concatenate([[0.0], precision])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.flatnonzero(mrec[1:] != mrec[:-1])
    area = float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))
    return min(max(area, 0.0), 1.0)


def match_annotations(
    annotations: Sequence[AnnotationRecord],
    predictions: Mapping[str, Sequence[ScoredBox]],
    iou_threshold: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """TP flags and positive-caption scores of every prediction.

    Per annotation, the highest-scored hit is the true positive; further
    hits of the same annotation count as false positives.
    """
    flags: List[bool] = []
    scores: List[float] = []
    for annotation in annotations:
        boxes = list(predictions.get(annotation.annotation_id, ()))
        positive = [p.s_final[annotation.positive_index] for p in boxes]
        matched = False
        for j in sorted(range(len(boxes)), key=lambda j: -positive[j]):
            hit = not matched and is_hit(boxes[j], annotation, iou_threshold)
            matched = matched or hit
            flags.append(hit)
            scores.append(positive[j])
    return np.asarray(flags, dtype=bool), np.asarray(scores, dtype=np.float64)


def evaluate_track(
    annotations: Sequence[AnnotationRecord],
    predictions: Mapping[str, Sequence[ScoredBox]],
    iou_threshold: float = 0.5,
) -> float:
    """AP of one track; ``predictions`` maps annotation ids to scored boxes."""
    if not annotations:
        raise EvaluationError("Track has no annotations")
    tp, scores = match_annotations(annotations, predictions, iou_threshold)
    return average_precision(tp, scores, len(annotations))


def precision_recall_curve(
    annotations: Sequence[AnnotationRecord],
    predictions: Mapping[str, Sequence[ScoredBox]],
    iou_threshold: float = 0.5,
) -> Tuple[np.ndarray, np.ndarray]:
    tp, scores = match_annotations(annotations, predictions, iou_threshold)
    return operating_points(tp, scores, len(annotations))


def sweep_ap(
    annotations: Sequence[AnnotationRecord],
    predictions: Mapping[str, Sequence[ScoredBox]],
) -> float:
    """Mean AP over IoU thresholds 0.50:0.05:0.95."""
    return float(np.mean([evaluate_track(annotations, predictions, float(t)) for t in SWEEP_THRESHOLDS]))


def localization_diagnostics(
    annotations: Sequence[AnnotationRecord],
    predictions: Mapping[str, Sequence[ScoredBox]],
) -> Tuple[float, float]:
    """Mean IoU and mean positive score of each annotation's top-ranked prediction."""
    ious = []
    scores = []
    for annotation in annotations:
        boxes = predictions.get(annotation.annotation_id, ())
        if not boxes:
            continue
        best = max(boxes, key=lambda p: p.s_final[annotation.positive_index])
        ious.append(iou(best.box, annotation.gt_box))
        scores.append(best.s_final[annotation.positive_index])
    if not ious:
        return 0.0, 0.0
    return float(np.mean(ious)), float(np.mean(scores))


def index_records(records: Iterable[PredictionRecord]) -> Dict[str, List[ScoredBox]]:
    indexed: Dict[str, List[ScoredBox]] = {}
    for record in records:
        indexed.setdefault(record.annotation_id, []).extend(record.predictions)
    return indexed


def evaluate(
    annotations: Sequence[AnnotationRecord],
    records: Iterable[PredictionRecord],
    tracks: Optional[Sequence[str]] = None,
    iou_threshold: float = 0.5,
    iou_sweep: bool = False,
) -> APResult:
    """Per-track AP, its average, and the localization diagnostics."""
    if not annotations:
        raise EvaluationError("No annotations to evaluate")
    predictions = index_records(records)
    known = {a.annotation_id for a in annotations}
    stray = [key for key in predictions if key not in known]
    if stray:
        logger.warning("Predictions reference unknown annotations", count=len(stray))

    names = list(tracks) if tracks else list(dict.fromkeys(a.track for a in annotations))
    results = []
    for name in names:
        subset = [a for a in annotations if a.track == name]
        if not subset:
            logger.warning("Track has no annotations, skipped", track=name)
            continue
        mean_iou, mean_score = localization_diagnostics(subset, predictions)
        results.append(
            TrackResult(
                track=name,
                ap=evaluate_track(subset, predictions, iou_threshold),
                annotations=len(subset),
                predictions=sum(len(predictions.get(a.annotation_id, ())) for a in subset),
                mean_iou=mean_iou,
                mean_score=mean_score,
                ap_50_95=sweep_ap(subset, predictions) if iou_sweep else None,
            )
        )
    if not results:
        raise EvaluationError("No track has annotations", tracks=names)
    return APResult(
        tracks=results,
        average=min(float(np.mean([r.ap for r in results])), 1.0),
        iou_threshold=iou_threshold,
        annotations=sum(r.annotations for r in results),
        predictions=sum(r.predictions for r in results),
    )
