import pytest
import torch

from app.core.config import ModelConfig
from app.core.errors import DimensionMismatchError, SelectionError
from app.modules.cgod.layers import classify, topk_rows
from app.modules.cgod.model import GuidedDetector
from app.modules.encoders.types import SceneObject
from app.utils.tensor_utils import DTYPE
from tests.factories import SceneSpecFactory


@pytest.fixture
def scene_inputs(tiny_encoder, tiny_dataset):
    image = tiny_dataset.split("test")[0]
    vocabulary = image.annotations[0].vocabulary()
    fmap = tiny_encoder.encode_image(image.scene)
    return fmap, tiny_encoder.embed_vocabulary(vocabulary)


def detector(config, **overrides):
    model = config.model.model_copy(update=overrides)
    return GuidedDetector(config.encoder.dim, model)


def test_forward_shapes_and_scores(tiny_config, scene_inputs):
    fmap, embeddings = scene_inputs
    model = detector(tiny_config)
    ctx = model.encode_features(fmap)
    output = model(ctx, embeddings.subjects, embeddings.attributes)
    assert output.k == tiny_config.model.k
    assert output.coarse_logits.shape == (output.k, embeddings.n)
    assert bool(((output.boxes > 0) & (output.boxes < 1)).all())
    torch.testing.assert_close(output.coarse_scores, torch.sigmoid(output.coarse_logits))


def test_queries_come_from_the_topk_cells(tiny_config, scene_inputs):
    fmap, embeddings = scene_inputs
    model = detector(tiny_config)
    ctx = model.encode_features(fmap)
    output = model(ctx, embeddings.subjects, embeddings.attributes)
    rows, matched, _ = topk_rows(classify(embeddings.subjects, ctx.enc, tiny_config.model.m_coarse), output.k)
    assert torch.equal(output.rows, rows)
    assert torch.equal(output.matched, matched)


def test_k_is_capped_by_the_number_of_cells(tiny_config, scene_inputs):
    fmap, embeddings = scene_inputs
    model = detector(tiny_config, k=1000)
    output = model(model.encode_features(fmap), embeddings.subjects, embeddings.attributes)
    assert output.k == fmap.grid_shape[0] * fmap.grid_shape[1]


def test_decoding_is_query_permutation_equivariant(tiny_config, scene_inputs):
    fmap, _ = scene_inputs
    model = detector(tiny_config)
    ctx = model.encode_features(fmap)
    queries = ctx.enc[:5]
    reference = torch.cat([ctx.centers[:5], torch.full((5, 2), 0.3, dtype=DTYPE)], dim=1)
    perm = torch.tensor([4, 2, 0, 3, 1])
    p, boxes = model.decode(queries, reference, ctx)
    p_perm, boxes_perm = model.decode(queries[perm], reference[perm], ctx)
    torch.testing.assert_close(p_perm, p[perm])
    torch.testing.assert_close(boxes_perm, boxes[perm])


def test_fixed_references_are_centred_on_the_selected_cells(tiny_config, scene_inputs):
    fmap, embeddings = scene_inputs
    model = detector(tiny_config, reference="fixed", reference_size=0.3)
    ctx = model.encode_features(fmap)
    output = model(ctx, embeddings.subjects, embeddings.attributes)
    torch.testing.assert_close(output.references[:, :2], ctx.centers[output.rows])
    assert bool((output.references[:, 2:] == 0.3).all())


def test_extent_references_contain_their_seed_cells(tiny_config, scene_inputs):
    fmap, embeddings = scene_inputs
    model = detector(tiny_config)
    ctx = model.encode_features(fmap)
    output = model(ctx, embeddings.subjects, embeddings.attributes)
    seeds = ctx.centers[output.rows]
    half = output.references[:, 2:] / 2
    assert bool(((seeds - output.references[:, :2]).abs() <= half + 1e-9).all())
    cell = 1.0 / fmap.grid_shape[1]
    assert bool((output.references[:, 2:] >= cell - 1e-9).all())


def test_extent_reference_spans_a_planted_object(tiny_config, tiny_encoder):
    scene = SceneSpecFactory(
        image_size=(96, 96),
        objects=[SceneObject(box=[1 / 3, 1 / 3, 0.3, 0.3], subject="cup", attributes=["red"])],
    )
    fmap = tiny_encoder.encode_image(scene)
    subjects = torch.stack([tiny_encoder.encode_text("cup")])
    model = detector(tiny_config, k=1)
    output = model(model.encode_features(fmap), subjects, [torch.zeros(0, tiny_config.encoder.dim, dtype=DTYPE)])
    # cells with centers inside the box span [1/6, 3/6) on both axes
    torch.testing.assert_close(output.references[0], torch.tensor([1 / 3, 1 / 3, 1 / 3, 1 / 3], dtype=DTYPE))


def test_fusion_can_be_disabled(tiny_config):
    assert detector(tiny_config, aef_mode="none").fusion is None
    assert detector(tiny_config).fusion.mode == "subtract"


def test_initialization_is_seeded(tiny_config):
    a = detector(tiny_config).state_dict()
    b = detector(tiny_config).state_dict()
    c = detector(tiny_config, init_seed=1).state_dict()
    assert all(torch.equal(a[name], b[name]) for name in a)
    assert not all(torch.equal(a[name], c[name]) for name in a)


def test_empty_vocabulary_is_rejected(tiny_config, scene_inputs):
    fmap, _ = scene_inputs
    model = detector(tiny_config)
    with pytest.raises(SelectionError):
        model(model.encode_features(fmap), torch.zeros(0, tiny_config.encoder.dim, dtype=DTYPE), [])


def test_feature_dimension_must_match(scene_inputs):
    fmap, _ = scene_inputs
    with pytest.raises(DimensionMismatchError):
        GuidedDetector(fmap.dim + 1, ModelConfig(k=2)).encode_features(fmap)
