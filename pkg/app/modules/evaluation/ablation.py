"""
Ablation suite on the synthetic benchmark.

Architecture variants are trained (both stages) and evaluated with one
shared seed. Stage-1 weights are shared between variants whose detector
configuration is identical. Inference-time knobs (alpha and the fusion
strategy) re-score the stored coarse and fine scores of the ``full`` model.
"""

import copy
from typing import Callable, Dict, List, Optional, Sequence

import structlog
import torch

from app.core.config import PipelineConfig
from app.core.errors import ConfigError
from app.modules.detection.service import GuidedPipeline
from app.modules.encoders.service import EncoderService
from app.modules.fgad.service import fuse_scores
from app.modules.training.data import stage1_samples, stage2_samples
from app.modules.training.service import train_stage1, train_stage2
from app.utils.parallel import map_ordered
from app.utils.tensor_utils import DTYPE

from .metrics import evaluate
from .synthetic import benchmark_encoder
from .types import AblationReport, AblationRow, BenchmarkDataset, PredictionRecord

logger = structlog.get_logger(__name__)

DEFAULT_SUITE = (
    "full",
    "no_AEF",
    "no_CGOD",
    "no_projection",
    "alpha_0.2",
    "alpha_0.4",
    "alpha_0.6",
    "alpha_0.8",
    "fusion_weighted_average",
)

# Variants that change what is trained, as dotted config overrides.
TRAINED_VARIANTS: Dict[str, Dict[str, object]] = {
    "full": {},
    "no_AEF": {"model.aef_mode": "none"},
    "no_CGOD": {"model.cgod_text": "full"},
    "no_projection": {"train.train_projection": False, "fusion.fgad_text": "frozen"},
    "aef_no_subtract": {"model.aef_mode": "no_subtract"},
    "aef_addition": {"model.aef_mode": "addition"},
    "aef_concatenation": {"model.aef_mode": "concatenation"},
    "cgod_refined": {"model.cgod_text": "refined_full"},
    "generative": {"fusion.scorer": "generative"},
}


def variant_config(base: PipelineConfig, overrides: Dict[str, object]) -> PipelineConfig:
    data = base.model_dump()
    for dotted, value in overrides.items():
        node = data
        keys = dotted.split(".")
        for key in keys[:-1]:
            node = node[key]
        node[keys[-1]] = value
    return PipelineConfig.model_validate(data)


def rescore(records: Sequence[PredictionRecord], alpha: float, strategy: str) -> List[PredictionRecord]:
    """Recompute s_final from stored s_coarse and s_fine."""
    rescored = []
    for record in records:
        boxes = []
        for p in record.predictions:
            s_final = fuse_scores(
                torch.tensor(p.s_coarse, dtype=DTYPE), torch.tensor(p.s_fine, dtype=DTYPE), alpha, strategy
            )
            boxes.append(p.model_copy(update={"s_final": [float(v) for v in s_final]}))
        rescored.append(record.model_copy(update={"predictions": boxes}))
    return rescored


def predict_dataset(pipeline: GuidedPipeline, dataset: BenchmarkDataset, workers: int = 1) -> List[PredictionRecord]:
    batches = map_ordered(pipeline.predict_image, dataset.split("test"), workers)
    return [record for batch in batches for record in batch]


class AblationRunner:
    """Trains and evaluates variants; stage-1 weights are cached per detector config."""

    def __init__(self, config: PipelineConfig, dataset: BenchmarkDataset, encoder: Optional[EncoderService] = None):
        self.config = config
        self.dataset = dataset
        self.encoder = encoder or benchmark_encoder(config.encoder, dataset.manifest)
        self._stage1: Dict[str, dict] = {}
        self._coarse = None
        self._fine = None

    def coarse_samples(self):
        if self._coarse is None:
            self._coarse = stage1_samples(self.dataset, limit=self.config.train.stage1_images)
        return self._coarse

    def fine_samples(self):
        if self._fine is None:
            self._fine = stage2_samples(self.dataset, self.config.train.stage2_negatives, self.config.seed)
        return self._fine

    def train(self, config: PipelineConfig) -> GuidedPipeline:
        pipeline = GuidedPipeline(config, self.encoder)
        alpha = config.fusion.alpha
        key = config.model.model_dump_json()
        if key in self._stage1:
            pipeline.detector.load_state_dict(self._stage1[key])
        else:
            train_stage1(pipeline, self.coarse_samples(), config.train.stage_config(1, alpha, config.seed))
            self._stage1[key] = copy.deepcopy(pipeline.detector.state_dict())
        stage2 = config.train.stage_config(2, alpha, config.seed)
        train_stage2(pipeline, self.fine_samples(), stage2, coarse_samples=self.coarse_samples())
        return pipeline

    def evaluate(self, name: str, records: Sequence[PredictionRecord]) -> AblationRow:
        result = evaluate(
            self.dataset.annotations(),
            records,
            tracks=self.dataset.track_names(),
            iou_threshold=self.config.eval.iou_threshold,
            iou_sweep=self.config.eval.iou_sweep,
        )
        weights = [t.annotations for t in result.tracks]
        total = max(sum(weights), 1)
        return AblationRow(
            variant=name,
            result=result,
            mean_iou=sum(t.mean_iou * w for t, w in zip(result.tracks, weights)) / total,
            mean_score=sum(t.mean_score * w for t, w in zip(result.tracks, weights)) / total,
        )

    def run_variant(self, name: str, full_records: Callable[[], List[PredictionRecord]]) -> AblationRow:
        if name in TRAINED_VARIANTS:
            config = variant_config(self.config, TRAINED_VARIANTS[name])
            pipeline = self.train(config)
            records = predict_dataset(pipeline, self.dataset, self.config.workers)
        elif name.startswith("alpha_"):
            try:
                alpha = float(name.split("_", 1)[1])
            except ValueError:
                raise ConfigError(f"Malformed alpha variant: {name}")
            records = rescore(full_records(), alpha, self.config.fusion.strategy)
        elif name == "fusion_weighted_average":
            records = rescore(full_records(), self.config.fusion.alpha, "weighted_average")
        elif name == "fusion_multiply":
            records = rescore(full_records(), self.config.fusion.alpha, "multiply")
        else:
            raise ConfigError(f"Unknown ablation variant: {name}")
        return self.evaluate(name, records)

    def run(self, suite: Sequence[str] = DEFAULT_SUITE) -> AblationReport:
        cached: Dict[str, List[PredictionRecord]] = {}

        def full_records() -> List[PredictionRecord]:
            if "full" not in cached:
                pipeline = self.train(self.config)
                cached["full"] = predict_dataset(pipeline, self.dataset, self.config.workers)
            return cached["full"]

        rows = []
        for name in suite:
            logger.info("Ablation variant started", variant=name)
            try:
                if name == "full":
                    row = self.evaluate(name, full_records())
                else:
                    row = self.run_variant(name, full_records)
            except Exception as e:
                logger.error("Ablation variant failed", variant=name, error=str(e))
                rows.append(AblationRow(variant=name, status="failed", error=str(e)))
                continue
            logger.info("Ablation variant finished", variant=name, average=row.result.average)
            rows.append(row)

        failed = sum(1 for r in rows if r.status == "failed")
        status = "ok" if failed == 0 else ("failed" if failed == len(rows) else "partial")
        return AblationReport(status=status, seed=self.config.seed, rows=rows)


def run_ablation(
    config: PipelineConfig,
    dataset: BenchmarkDataset,
    suite: Sequence[str] = DEFAULT_SUITE,
    encoder: Optional[EncoderService] = None,
) -> AblationReport:
    """Train and evaluate every named variant with ``config.seed``."""
    return AblationRunner(config, dataset, encoder).run(suite)
