"""
Encoders module.
Frozen text/image encoders (synthetic and file-based) and the projection head.
"""

from .projection import ProjectionHead, refine_embedding
from .service import EncoderService, embed_vocabulary, encode_image, encode_text
from .types import EmbeddingSet, SceneObject, SceneSpec, SpatialFeatureMap

__all__ = [
    "ProjectionHead",
    "refine_embedding",
    "EncoderService",
    "embed_vocabulary",
    "encode_image",
    "encode_text",
    "EmbeddingSet",
    "SceneObject",
    "SceneSpec",
    "SpatialFeatureMap",
]
