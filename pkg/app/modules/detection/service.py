"""
End-to-end detection: encoders, coarse detector, fine scoring and fusion.
"""

import threading
from collections import OrderedDict
from typing import Dict, List, Optional, Sequence, Tuple

import structlog
import torch
from torch import Tensor, nn

from app.core.config import PipelineConfig
from app.modules.cgod.checkpoint import load_checkpoint, save_checkpoint
from app.modules.cgod.model import GuidedDetector
from app.modules.cgod.types import DetectorOutput, FeatureContext, Prediction
from app.modules.encoders.backends import ImageInput
from app.modules.encoders.projection import ProjectionHead
from app.modules.encoders.service import EncoderService
from app.modules.encoders.types import EmbeddingSet, SpatialFeatureMap
from app.modules.evaluation.types import AnnotationRecord, ImageRecord, PredictionRecord, ScoredBox
from app.modules.fgad.generative import GenerativeFineScorer, get_generative_backend
from app.modules.fgad.service import CosineFineScorer, FineScorer, score_predictions, suppress_duplicates
from app.modules.vocabulary.types import FineGrainedClass

logger = structlog.get_logger(__name__)

VocabularyKey = Tuple[Tuple[str, str, Tuple[str, ...]], ...]

EMBEDDING_CACHE_SIZE = 1024


def build_scorer(config: PipelineConfig) -> FineScorer:
    if config.fusion.scorer == "generative":
        return GenerativeFineScorer(get_generative_backend(config.generative), config.fusion.m_fine)
    return CosineFineScorer(config.fusion.m_fine, config.fusion.pooling)


def vocabulary_key(vocabulary: Sequence[FineGrainedClass]) -> VocabularyKey:
    return tuple((c.full_name, c.subject, tuple(c.attributes)) for c in vocabulary)


class GuidedPipeline:
    """Detector, projection head and scorer bound to one encoder world."""

    def __init__(
        self,
        config: PipelineConfig,
        encoder: EncoderService,
        detector: Optional[GuidedDetector] = None,
        head: Optional[ProjectionHead] = None,
        scorer: Optional[FineScorer] = None,
        cache_size: int = EMBEDDING_CACHE_SIZE,
    ):
        self.config = config
        self.encoder = encoder
        self.detector = detector or GuidedDetector(config.encoder.dim, config.model)
        self.head = head or ProjectionHead(config.encoder.dim)
        self.scorer = scorer or build_scorer(config)
        self.cache_size = cache_size
        self._embeddings: "OrderedDict[VocabularyKey, EmbeddingSet]" = OrderedDict()
        self._lock = threading.Lock()

    def modules(self) -> Dict[str, nn.Module]:
        return {"detector": self.detector, "projection": self.head}

    def save(self, path: str) -> None:
        save_checkpoint(path, self.modules(), self.config.model_dump(mode="json"))

    def load(self, path: str) -> None:
        load_checkpoint(path, self.modules())

    def embed(self, vocabulary: Sequence[FineGrainedClass]) -> EmbeddingSet:
        """Frozen-encoder embeddings of a vocabulary, cached by its names (least recently used evicted)."""
        key = vocabulary_key(vocabulary)
        with self._lock:
            cached = self._embeddings.get(key)
            if cached is not None:
                self._embeddings.move_to_end(key)
                return cached
        cached = self.encoder.embed_vocabulary(vocabulary)
        with self._lock:
            self._embeddings[key] = cached
            self._embeddings.move_to_end(key)
            while len(self._embeddings) > self.cache_size:
                self._embeddings.popitem(last=False)
        return cached

    def classifier(self, embeddings: EmbeddingSet) -> Tensor:
        """Frozen classifier weights of the coarse detector."""
        if self.config.model.cgod_text == "refined_full":
            return self.head(embeddings.full)
        return embeddings.classifier(self.config.model.cgod_text)

    def fine_text(self, embeddings: EmbeddingSet) -> Tensor:
        if self.config.fusion.fgad_text == "refined":
            return self.head(embeddings.full)
        return embeddings.full

    def encode(self, image: ImageInput) -> Tuple[SpatialFeatureMap, FeatureContext]:
        fmap = self.encoder.encode_image(image)
        return fmap, self.detector.encode_features(fmap)

    def forward(self, ctx: FeatureContext, embeddings: EmbeddingSet) -> DetectorOutput:
        return self.detector(ctx, self.classifier(embeddings), embeddings.attributes)

    def score(
        self,
        fmap: SpatialFeatureMap,
        ctx: FeatureContext,
        vocabulary: Sequence[FineGrainedClass],
        image_id: Optional[str] = None,
    ) -> List[Prediction]:
        embeddings = self.embed(vocabulary)
        with torch.no_grad():
            output = self.forward(ctx, embeddings)
            refined = self.fine_text(embeddings)
        scored = score_predictions(
            output.predictions(),
            fmap,
            refined,
            self.config.fusion,
            self.scorer,
            class_names=[c.full_name for c in vocabulary],
            image_id=image_id,
        )
        if self.config.fusion.nms_iou is None:
            return scored
        return suppress_duplicates(scored, self.config.fusion.nms_iou)

    def detect(self, image: ImageInput, vocabulary: Sequence[FineGrainedClass]) -> List[Prediction]:
        """Predictions with coarse, fine and fused scores over ``vocabulary``."""
        with torch.no_grad():
            fmap, ctx = self.encode(image)
        image_id = getattr(image, "image_id", None)
        return self.score(fmap, ctx, vocabulary, image_id)

    def predict_image(self, image: ImageRecord) -> List[PredictionRecord]:
        """One prediction record per annotation of a benchmark image."""
        with torch.no_grad():
            fmap, ctx = self.encode(image.scene)
        records = []
        for annotation in image.annotations:
            vocabulary = annotation.vocabulary()
            predictions = self.score(fmap, ctx, vocabulary, image.image_id)
            records.append(to_record(image.image_id, annotation, vocabulary, predictions))
        return records


def to_record(
    image_id: str,
    annotation: AnnotationRecord,
    vocabulary: Sequence[FineGrainedClass],
    predictions: Sequence[Prediction],
) -> PredictionRecord:
    return PredictionRecord(
        image_id=image_id,
        annotation_id=annotation.annotation_id,
        track=annotation.track,
        vocabulary=[c.full_name for c in vocabulary],
        positive_index=annotation.positive_index,
        predictions=[
            ScoredBox(
                box=[float(v) for v in p.box],
                s_coarse=[float(v) for v in p.coarse_scores],
                s_fine=[float(v) for v in p.s_fine],
                s_final=[float(v) for v in p.s_final],
                fine_fallback=p.fine_fallback,
            )
            for p in predictions
        ],
    )
