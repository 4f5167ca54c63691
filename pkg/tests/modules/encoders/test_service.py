import pytest
import torch

from app.core.config import EncoderConfig
from app.core.errors import ConfigError, DimensionMismatchError
from app.modules.encoders.projection import ProjectionHead, refine_embedding
from app.modules.encoders.service import EncoderService
from tests.factories import FineGrainedClassFactory


def test_embed_vocabulary_shapes():
    vocabulary = [
        FineGrainedClassFactory(subject="cup", attributes=["red", "wooden"]),
        FineGrainedClassFactory(subject="lamp", attributes=[]),
    ]
    encoder = EncoderService.for_vocabulary(EncoderConfig(dim=16), vocabulary)
    embeddings = encoder.embed_vocabulary(vocabulary)
    assert embeddings.n == 2
    assert embeddings.dim == 16
    assert embeddings.attribute_counts == [2, 0]
    assert bool(embeddings.valid.all())
    assert torch.equal(embeddings.refined_full, embeddings.full)
    assert torch.equal(embeddings.classifier("subject"), embeddings.subjects)


def test_subject_template_changes_subject_embedding():
    vocabulary = [FineGrainedClassFactory(subject="cup")]
    bare = EncoderService.for_vocabulary(EncoderConfig(dim=16), vocabulary).embed_vocabulary(vocabulary)
    templated = EncoderService.for_vocabulary(
        EncoderConfig(dim=16, subject_template="a photo of a {}"), vocabulary
    ).embed_vocabulary(vocabulary)
    assert not torch.equal(bare.subjects, templated.subjects)


def test_file_backend_needs_embedding_file():
    with pytest.raises(ConfigError):
        EncoderService(EncoderConfig(backend="file"))


def test_projection_head_starts_at_identity():
    head = ProjectionHead(8)
    e = torch.nn.functional.normalize(torch.randn(3, 8, dtype=torch.float64), dim=-1)
    torch.testing.assert_close(refine_embedding(head, e), e)
    assert head.distance_from_identity() == 0.0
    assert not head.trainable


def test_projection_head_output_is_unit_norm_after_update():
    head = ProjectionHead(8, trainable=True)
    with torch.no_grad():
        head.linear.weight.add_(0.3)
    out = head(torch.randn(5, 8, dtype=torch.float64))
    torch.testing.assert_close(out.norm(dim=-1), torch.ones(5, dtype=torch.float64))
    assert head.distance_from_identity() > 0.0


def test_projection_head_rejects_wrong_dimension():
    with pytest.raises(DimensionMismatchError):
        ProjectionHead(8)(torch.zeros(4, dtype=torch.float64))
