"""
Two-stage training.

Stage 1 fits the detector on base classes with the projection head frozen
at identity. Stage 2 continues on fine-grained samples, unfreezes the
projection head and adds the fused binary loss on matched predictions.
Optimization is plain SGD on one sample per iteration.
"""

import math
import os
import random
from typing import Iterator, List, Optional, Sequence, Tuple

import structlog
import torch
from torch import Tensor

from app.core.config import StageConfig
from app.core.errors import ConfigError, DegenerateBoxError, DivergenceError, GuidedError, RegionPoolingError
from app.modules.detection.service import GuidedPipeline
from app.modules.encoders.types import SpatialFeatureMap
from app.modules.evaluation.metrics import iou
from app.modules.fgad.service import fine_scores, pool_region
from app.utils.file_utils import ensure_dir
from app.utils.tensor_utils import DTYPE

from .losses import detection_loss, fine_loss, target_rows
from .matcher import match_predictions, overlap_positives
from .types import Assignment, IterationLog, TrainResult, TrainSample

logger = structlog.get_logger(__name__)

DIAGNOSTIC_SAMPLES = 32


def sample_stream(samples: Sequence[TrainSample], seed: int) -> Iterator[TrainSample]:
    """Endless seeded pass over the samples, reshuffled every epoch."""
    if not samples:
        raise GuidedError("Training needs at least one sample")
    rng = random.Random(seed)
    order = list(range(len(samples)))
    while True:
        rng.shuffle(order)
        for index in order:
            yield samples[index]


def matched_fine_scores(
    pipeline: GuidedPipeline,
    fmap: SpatialFeatureMap,
    boxes: Tensor,
    text: Tensor,
    assignment: Assignment,
    m_fine: float,
) -> Tuple[Tensor, List[int]]:
    """Fine scores of matched predictions pooled at their detached boxes.

    Returns the (m, n) scores and the positions into ``assignment`` that
    pooled successfully.
    """
    rows = []
    kept = []
    for position, pred in enumerate(assignment.pred_indices):
        try:
            region = pool_region(fmap, boxes[int(pred)].detach().tolist(), pipeline.config.fusion.pooling)
        except (RegionPoolingError, DegenerateBoxError) as e:
            logger.warning("Skipping fine loss for one prediction", error=str(e))
            continue
        rows.append(fine_scores(region.vector, text, m_fine)[1])
        kept.append(position)
    if not rows:
        return torch.zeros(0, text.shape[0], dtype=DTYPE), kept
    return torch.stack(rows), kept


class StageTrainer:
    """SGD loop of one stage over a pipeline's detector (and projection head)."""

    def __init__(self, pipeline: GuidedPipeline, config: StageConfig):
        self.pipeline = pipeline
        self.config = config
        pipeline.head.trainable = config.train_projection
        self.groups = [[p for p in pipeline.detector.parameters() if p.requires_grad]]
        param_groups = [{"params": self.groups[0], "lr": config.learning_rate}]
        if config.train_projection:
            self.groups.append(list(pipeline.head.parameters()))
            head_lr = config.projection_learning_rate or config.learning_rate
            param_groups.append({"params": self.groups[1], "lr": head_lr})
        self.parameters = [p for group in self.groups for p in group]
        self.optimizer = torch.optim.SGD(param_groups, lr=config.learning_rate)

    def losses(self, sample: TrainSample):
        """Loss components of one sample and the number of matched predictions."""
        pipeline = self.pipeline
        cfg = self.config
        fmap, ctx = pipeline.encode(sample.scene)
        embeddings = pipeline.embed(sample.vocabulary)
        output = pipeline.forward(ctx, embeddings)

        gt_boxes = torch.tensor(sample.gt_boxes, dtype=DTYPE).reshape(-1, 4)
        columns, targets = target_rows(
            [c.subject for c in sample.vocabulary],
            sample.subjects(),
            sample.gt_subject_ids,
            sample.gt_fine_ids,
            pipeline.config.model.cgod_text,
        )
        assignment = match_predictions(
            output.coarse_scores.detach(), output.boxes.detach(), gt_boxes, columns, cfg.match_box_weight
        )
        extra = None
        if cfg.overlap_positive_iou is not None:
            extra = overlap_positives(output.boxes, gt_boxes, assignment, cfg.overlap_positive_iou)
        loss_cls, loss_box = detection_loss(output.coarse_logits, output.boxes, gt_boxes, targets, assignment, extra)

        loss_fine = torch.zeros((), dtype=DTYPE)
        if cfg.weight_fine > 0.0 and len(assignment):
            text = pipeline.fine_text(embeddings)
            s_fine, kept = matched_fine_scores(
                pipeline, fmap, output.boxes, text, assignment, pipeline.config.fusion.m_fine
            )
            if kept:
                preds = torch.as_tensor(assignment.pred_indices[kept], dtype=torch.long)
                gts = torch.as_tensor(assignment.gt_indices[kept], dtype=torch.long)
                fine_ids = torch.tensor(sample.gt_fine_ids, dtype=torch.long)[gts]
                loss_fine = fine_loss(output.coarse_scores[preds], s_fine, fine_ids, cfg.alpha)
        return loss_cls, loss_box, loss_fine, len(assignment)

    def clip_gradients(self) -> float:
        """Clip each parameter group to ``grad_clip`` on its own; returns the unclipped total norm."""
        max_norm = self.config.grad_clip if self.config.grad_clip is not None else math.inf
        squares = 0.0
        for group in self.groups:
            params = [p for p in group if p.grad is not None]
            if params:
                squares += float(torch.nn.utils.clip_grad_norm_(params, max_norm)) ** 2
        return math.sqrt(squares)

    def step(self, iteration: int, sample: TrainSample) -> IterationLog:
        cfg = self.config
        loss_cls, loss_box, loss_fine, matched = self.losses(sample)
        total = cfg.weight_cls * loss_cls + cfg.weight_box * loss_box
        if cfg.weight_fine > 0.0:
            total = total + cfg.weight_fine * loss_fine

        value = float(total.detach())
        if not math.isfinite(value) or value > cfg.divergence_threshold:
            raise DivergenceError(
                "Training diverged",
                stage=cfg.stage,
                iteration=iteration,
                sample=sample.sample_id,
                loss=value,
                loss_cls=float(loss_cls.detach()),
                loss_box=float(loss_box.detach()),
                loss_fine=float(loss_fine.detach()),
            )

        self.optimizer.zero_grad()
        total.backward()
        grad_norm = self.clip_gradients()
        self.optimizer.step()
        return IterationLog(
            stage=cfg.stage,
            iteration=iteration,
            sample_id=sample.sample_id,
            loss=value,
            loss_cls=float(loss_cls.detach()),
            loss_box=float(loss_box.detach()),
            loss_fine=float(loss_fine.detach()),
            matched=matched,
            grad_norm=grad_norm,
        )

    def run(
        self,
        samples: Sequence[TrainSample],
        coarse_samples: Optional[Sequence[TrainSample]] = None,
        log_path: Optional[str] = None,
    ) -> List[IterationLog]:
        """Train for ``config.iterations`` steps; co-training alternates with ``coarse_samples``."""
        cfg = self.config
        stream = sample_stream(samples, cfg.seed)
        coarse = sample_stream(coarse_samples, cfg.seed + 1) if cfg.co_train and coarse_samples else None
        handle = None
        if log_path:
            ensure_dir(os.path.dirname(os.path.abspath(log_path)))
            handle = open(log_path, "w", encoding="utf-8")
        logs: List[IterationLog] = []
        try:
            self.pipeline.detector.train()
            for iteration in range(cfg.iterations):
                sample = next(coarse) if coarse is not None and iteration % 2 == 1 else next(stream)
                record = self.step(iteration, sample)
                logs.append(record)
                if handle is not None:
                    handle.write(record.model_dump_json() + "\n")
                if (iteration + 1) % cfg.log_every == 0 or iteration + 1 == cfg.iterations:
                    logger.info(
                        "Training progress",
                        stage=cfg.stage,
                        iteration=iteration + 1,
                        loss=record.loss,
                        loss_cls=record.loss_cls,
                        loss_box=record.loss_box,
                        loss_fine=record.loss_fine,
                    )
        finally:
            self.pipeline.detector.eval()
            if handle is not None:
                handle.close()
        return logs


def mean_matched_iou(pipeline: GuidedPipeline, samples: Sequence[TrainSample], box_weight: float = 5.0) -> float:
    """Mean IoU between matched predictions and their ground truths."""
    values = []
    with torch.no_grad():
        for sample in samples:
            _, ctx = pipeline.encode(sample.scene)
            output = pipeline.forward(ctx, pipeline.embed(sample.vocabulary))
            gt_boxes = torch.tensor(sample.gt_boxes, dtype=DTYPE).reshape(-1, 4)
            columns, _ = target_rows(
                [c.subject for c in sample.vocabulary],
                sample.subjects(),
                sample.gt_subject_ids,
                sample.gt_fine_ids,
                pipeline.config.model.cgod_text,
            )
            assignment = match_predictions(output.coarse_scores, output.boxes, gt_boxes, columns, box_weight)
            for pred, gt in zip(assignment.pred_indices, assignment.gt_indices):
                values.append(iou(output.boxes[int(pred)].tolist(), sample.gt_boxes[int(gt)]))
    return sum(values) / len(values) if values else 0.0


def _finish(
    pipeline: GuidedPipeline,
    config: StageConfig,
    samples: Sequence[TrainSample],
    logs: List[IterationLog],
    checkpoint: Optional[str],
    log_path: Optional[str],
) -> TrainResult:
    if checkpoint:
        pipeline.save(checkpoint)
    result = TrainResult(
        stage=config.stage,
        iterations=len(logs),
        final_loss=logs[-1].loss if logs else None,
        checkpoint=checkpoint,
        log_path=log_path,
        projection_distance=pipeline.head.distance_from_identity(),
        mean_iou=mean_matched_iou(pipeline, samples[:DIAGNOSTIC_SAMPLES], config.match_box_weight),
    )
    logger.info(
        "Training stage finished",
        stage=config.stage,
        iterations=result.iterations,
        final_loss=result.final_loss,
        projection_distance=result.projection_distance,
        mean_iou=result.mean_iou,
    )
    return result


def train_stage1(
    pipeline: GuidedPipeline,
    samples: Sequence[TrainSample],
    config: StageConfig,
    checkpoint: Optional[str] = None,
    log_path: Optional[str] = None,
) -> TrainResult:
    """Detector pretraining on base classes; the projection head stays frozen."""
    if config.stage != 1:
        raise ConfigError("train_stage1 needs a stage-1 config", stage=config.stage)
    trainer = StageTrainer(pipeline, config)
    logs = trainer.run(samples, log_path=log_path)
    return _finish(pipeline, config, samples, logs, checkpoint, log_path)


def train_stage2(
    pipeline: GuidedPipeline,
    samples: Sequence[TrainSample],
    config: StageConfig,
    coarse_samples: Optional[Sequence[TrainSample]] = None,
    checkpoint: Optional[str] = None,
    log_path: Optional[str] = None,
) -> TrainResult:
    """Fine-grained training of detector and projection head."""
    if config.stage != 2:
        raise ConfigError("train_stage2 needs a stage-2 config", stage=config.stage)
    trainer = StageTrainer(pipeline, config)
    logs = trainer.run(samples, coarse_samples=coarse_samples, log_path=log_path)
    return _finish(pipeline, config, samples, logs, checkpoint, log_path)
