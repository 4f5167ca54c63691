"""
Encoder service: text/image encoding and vocabulary embedding.
"""

from typing import Iterable, List, Optional, Sequence

import structlog
import torch

from app.core.config import EncoderConfig
from app.core.errors import ConfigError, DimensionMismatchError, EncoderError
from app.modules.vocabulary.types import FineGrainedClass
from app.utils.tensor_utils import DTYPE

from .backends import (
    DirectionRegistry,
    FileImageBackend,
    FileTextBackend,
    ImageBackend,
    ImageInput,
    SyntheticImageBackend,
    SyntheticTextBackend,
    TextBackend,
)
from .projection import ProjectionHead
from .types import EmbeddingSet, SpatialFeatureMap

logger = structlog.get_logger(__name__)


def encode_text(backend: TextBackend, text: str, dim: Optional[int] = None) -> torch.Tensor:
    """Unit-normalized embedding of one text."""
    if not text or not text.strip():
        raise EncoderError("Cannot encode empty text")
    vector = backend.encode(text)
    expected = dim or backend.dim
    if vector.shape != (expected,):
        raise DimensionMismatchError("Text embedding has the wrong shape", shape=tuple(vector.shape), dim=expected)
    return vector


def encode_image(backend: ImageBackend, image: ImageInput) -> SpatialFeatureMap:
    return backend.encode(image)


def embed_vocabulary(
    vocabulary: Sequence[FineGrainedClass],
    backend: TextBackend,
    head: Optional[ProjectionHead] = None,
    subject_template: str = "{}",
) -> EmbeddingSet:
    """Subject, attribute and full-name embeddings for every class.

    A class whose texts fail to encode gets zero rows and is marked invalid;
    the rest of the vocabulary is still embedded.
    """
    dim = backend.dim
    subjects: List[torch.Tensor] = []
    attributes: List[torch.Tensor] = []
    full: List[torch.Tensor] = []
    valid: List[bool] = []
    errors = {}
    for position, cls in enumerate(vocabulary):
        try:
            subject = encode_text(backend, subject_template.format(cls.subject or cls.full_name), dim)
            attrs = [encode_text(backend, a, dim) for a in cls.attributes]
            name = encode_text(backend, cls.full_name, dim)
        except EncoderError as e:
            logger.error("Class embedding failed", class_id=cls.class_id, name=cls.full_name, error=str(e))
            errors[position] = str(e)
            subject = torch.zeros(dim, dtype=DTYPE)
            attrs = [torch.zeros(dim, dtype=DTYPE) for _ in cls.attributes]
            name = torch.zeros(dim, dtype=DTYPE)
            valid.append(False)
        else:
            valid.append(True)
        subjects.append(subject)
        attributes.append(torch.stack(attrs) if attrs else torch.zeros(0, dim, dtype=DTYPE))
        full.append(name)

    subject_matrix = torch.stack(subjects) if subjects else torch.zeros(0, dim, dtype=DTYPE)
    full_matrix = torch.stack(full) if full else torch.zeros(0, dim, dtype=DTYPE)
    valid_mask = torch.tensor(valid, dtype=torch.bool)
    if head is None:
        refined = full_matrix.clone()
    else:
        with torch.no_grad():
            refined = head(full_matrix) if full_matrix.shape[0] else full_matrix.clone()
        refined = torch.where(valid_mask[:, None], refined, torch.zeros_like(refined))
    return EmbeddingSet(
        subjects=subject_matrix,
        attributes=attributes,
        full=full_matrix,
        refined_full=refined,
        valid=valid_mask,
        errors=errors,
    )


class EncoderService:
    """Backends for one configured encoder world."""

    def __init__(
        self,
        config: EncoderConfig,
        subjects: Iterable[str] = (),
        attributes: Iterable[str] = (),
    ):
        self.config = config
        self.registry = DirectionRegistry(
            config.dim,
            seed=config.seed,
            attribute_alignment=config.attribute_alignment,
            subjects=subjects,
            attributes=attributes,
        )
        if config.backend == "synthetic":
            self.text_backend: TextBackend = SyntheticTextBackend(
                self.registry,
                subject_weight=config.subject_text_weight,
                attribute_weight=config.attribute_text_weight,
                unknown_weight=config.unknown_text_weight,
            )
            self.image_backend: ImageBackend = SyntheticImageBackend(
                self.registry,
                noise_scale=config.noise_scale,
                subject_weight=config.subject_visual_weight,
                attribute_weight=config.attribute_visual_weight,
            )
        else:
            if not config.text_embedding_file:
                raise ConfigError("encoder.backend=file requires encoder.text_embedding_file")
            self.text_backend = FileTextBackend(config.text_embedding_file, expected_dim=config.dim)
            self.image_backend = FileImageBackend(
                config.image_feature_dir, stride=config.image_stride, expected_dim=config.dim
            )

    @classmethod
    def for_vocabulary(cls, config: EncoderConfig, vocabulary: Iterable[FineGrainedClass]) -> "EncoderService":
        vocabulary = list(vocabulary)
        return cls(
            config,
            subjects=[c.subject for c in vocabulary if c.subject],
            attributes=[a for c in vocabulary for a in c.attributes],
        )

    def encode_text(self, text: str) -> torch.Tensor:
        return encode_text(self.text_backend, text, self.config.dim)

    def encode_image(self, image: ImageInput) -> SpatialFeatureMap:
        return encode_image(self.image_backend, image)

    def embed_vocabulary(
        self, vocabulary: Sequence[FineGrainedClass], head: Optional[ProjectionHead] = None
    ) -> EmbeddingSet:
        return embed_vocabulary(vocabulary, self.text_backend, head, self.config.subject_template)
