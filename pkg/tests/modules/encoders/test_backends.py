import numpy as np
import pytest
import torch

from app.core.config import EncoderConfig
from app.core.errors import ArtifactIOError, DimensionMismatchError, EncoderError, UnsupportedImageError
from app.modules.encoders.backends import (
    DirectionRegistry,
    FileImageBackend,
    FileTextBackend,
    SyntheticImageBackend,
    cells_inside,
    read_embedding_file,
    write_embedding_file,
)
from app.modules.encoders.service import EncoderService
from app.modules.encoders.types import SceneObject, SceneSpec
from tests.factories import SceneSpecFactory


def service(dim: int = 32, **overrides) -> EncoderService:
    config = EncoderConfig(dim=dim, **overrides)
    return EncoderService(config, subjects=["cup", "lamp"], attributes=["red", "blue", "wooden"])


def test_text_embeddings_are_unit_and_deterministic():
    a = service().encode_text("red wooden cup")
    b = service().encode_text("red wooden cup")
    assert a.shape == (32,)
    assert float(a.norm()) == pytest.approx(1.0, abs=1e-6)
    assert torch.equal(a, b)


def test_empty_text_is_rejected():
    with pytest.raises(EncoderError):
        service().encode_text(" ")


def test_attribute_alignment_sets_text_visual_cosine():
    registry = DirectionRegistry(256, attribute_alignment=0.6, attributes=["red"])
    cosine = float(registry.text_attribute("red") @ registry.visual("red"))
    # the gap direction is random, so the cosine is only near the alignment
    assert 0.35 < cosine < 0.85
    aligned = DirectionRegistry(64, attribute_alignment=1.0, attributes=["red"])
    assert torch.equal(aligned.text_attribute("red"), aligned.visual("red"))


def test_joint_name_leans_towards_attributes():
    encoder = service(dim=256, attribute_text_weight=3.0)
    name = encoder.encode_text("red wooden cup")
    subject = encoder.encode_text("cup")
    assert float(name @ subject) < 0.6


def test_synthetic_scene_plants_object_signal():
    encoder = service()
    scene = SceneSpecFactory(objects=[SceneObject(box=[0.25, 0.25, 0.4, 0.4], subject="cup", attributes=["red"])])
    fmap = encoder.encode_image(scene)
    assert fmap.grid_shape == (6, 6)
    registry = encoder.registry
    cup = registry.visual("cup")
    inside = fmap.features[0, 0]
    outside = fmap.features[5, 5]
    assert float(inside @ cup) > 0.5
    # background noise is projected off the subject span
    assert abs(float(outside @ cup)) < 1e-9


def test_synthetic_scene_is_seeded():
    scene = SceneSpecFactory()
    a = service().encode_image(scene).features
    b = service().encode_image(scene).features
    assert torch.equal(a, b)


def test_synthetic_backend_needs_a_scene():
    with pytest.raises(UnsupportedImageError):
        SyntheticImageBackend(DirectionRegistry(8)).encode("image.npy")


def test_cells_inside_falls_back_to_nearest_cell():
    centers = torch.tensor([[[0.25, 0.25], [0.75, 0.25]], [[0.25, 0.75], [0.75, 0.75]]], dtype=torch.float64)
    mask = cells_inside(centers, [0.7, 0.7, 0.01, 0.01])
    assert mask.sum() == 1
    assert bool(mask[1, 1])


def test_embedding_file_round_trip(tmp_path):
    path = str(tmp_path / "emb.bin")
    matrix = np.array([[3.0, 4.0], [1.0, 0.0]], dtype=np.float32)
    write_embedding_file(path, ["red cup", "lamp"], matrix)
    names, read = read_embedding_file(path)
    assert names == ["red cup", "lamp"]
    np.testing.assert_array_equal(read, matrix)

    backend = FileTextBackend(path, expected_dim=2)
    np.testing.assert_allclose(backend.encode("red cup").numpy(), [0.6, 0.8], atol=1e-7)
    with pytest.raises(EncoderError):
        backend.encode("blue cup")
    with pytest.raises(DimensionMismatchError):
        FileTextBackend(path, expected_dim=3)


def test_truncated_embedding_file_is_rejected(tmp_path):
    path = tmp_path / "emb.bin"
    write_embedding_file(str(path), ["a"], np.ones((1, 4), dtype=np.float32))
    path.write_bytes(path.read_bytes()[:-2])
    with pytest.raises(ArtifactIOError):
        read_embedding_file(str(path))


def test_file_image_backend_reads_npy_grids(tmp_path):
    grid = np.random.default_rng(0).normal(size=(3, 4, 8))
    np.save(tmp_path / "img0.npy", grid)
    backend = FileImageBackend(str(tmp_path), stride=16, expected_dim=8)
    fmap = backend.encode(SceneSpec(image_id="img0", image_size=(48, 64)))
    assert fmap.grid_shape == (3, 4)
    np.testing.assert_allclose(fmap.features.numpy(), grid)


def test_file_image_backend_rejects_other_formats(tmp_path):
    backend = FileImageBackend(str(tmp_path), stride=16)
    with pytest.raises(UnsupportedImageError):
        backend.encode("photo.png")
    with pytest.raises(ArtifactIOError):
        backend.encode("missing.npy")


def test_distinct_subjects_are_far_apart():
    encoder = EncoderService(EncoderConfig(dim=64), subjects=["dog", "cat"], attributes=["red"])
    assert float(encoder.encode_text("dog") @ encoder.encode_text("cat")) < 0.5


def test_empty_scene_carries_no_subject_evidence():
    encoder = EncoderService(EncoderConfig(dim=64), subjects=["dog", "cat", "cup"], attributes=["red"])
    fmap = encoder.encode_image(SceneSpecFactory(objects=[]))
    cells = torch.nn.functional.normalize(fmap.flat(), dim=1)
    for subject in ("dog", "cat", "cup"):
        cosines = cells @ encoder.encode_text(subject)
        assert float(cosines.abs().max()) <= 0.3
