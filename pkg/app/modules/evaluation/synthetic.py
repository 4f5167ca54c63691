"""
Seeded synthetic fine-grained benchmark.

Every object is a subject with one value of each attribute type, planted
into a synthetic feature map inside its box. Distractor objects copy the
attributes of another object onto a different subject, so a detector that
localizes by attribute-heavy full names is drawn to the wrong object.
"""

import random
from typing import Dict, List, Optional, Sequence

import structlog
import torch

from app.core.config import BenchmarkConfig, EncoderConfig, FusionConfig
from app.core.errors import EvaluationError
from app.modules.encoders.service import EncoderService
from app.modules.encoders.types import SceneObject, SceneSpec
from app.modules.fgad.service import fine_scores, pool_region
from app.modules.vocabulary.service import vocabulary_service
from app.modules.vocabulary.types import FineGrainedClass, ParseStatus
from app.utils.tensor_utils import DTYPE, l2_normalize

from .metrics import to_corners
from .negatives import generate_negatives
from .types import (
    DEFAULT_TRACKS,
    AnnotationRecord,
    BenchmarkDataset,
    BenchmarkManifest,
    ImageRecord,
    PredictionRecord,
    ScoredBox,
    TrackSpec,
)

logger = structlog.get_logger(__name__)

SEED_RANGE = 2**31 - 1


def resolve_tracks(config: BenchmarkConfig) -> List[TrackSpec]:
    tracks = []
    for name in config.tracks:
        if name not in DEFAULT_TRACKS:
            raise EvaluationError(f"Unknown track: {name}", known=sorted(DEFAULT_TRACKS))
        track = DEFAULT_TRACKS[name]
        if track.attribute_type and track.attribute_type not in config.attribute_pools:
            logger.warning("Track has no attribute pool, skipped", track=name)
            continue
        tracks.append(track.model_copy(update={"negatives_per_annotation": config.negatives_per_annotation}))
    return tracks


def object_class(subject: str, attributes: Sequence[str], class_id: int = 0) -> FineGrainedClass:
    """Class of a planted object, named "attributes subject" and decomposed by rules."""
    name = " ".join(list(attributes) + [subject])
    parsed = vocabulary_service.decompose(name, class_id)
    if parsed.status == ParseStatus.OK and parsed.subject == subject and parsed.attributes == list(attributes):
        return parsed
    return FineGrainedClass(class_id=class_id, full_name=name, subject=subject, attributes=list(attributes))


def _overlaps(box: Sequence[float], others: Sequence[Sequence[float]]) -> bool:
    x0, y0, x1, y1 = to_corners(box)
    for other in others:
        a0, b0, a1, b1 = to_corners(other)
        if x0 < a1 and a0 < x1 and y0 < b1 and b0 < y1:
            return True
    return False


def place_box(rng: random.Random, config: BenchmarkConfig, placed: Sequence[Sequence[float]]) -> Optional[List[float]]:
    """Box inside the unit square that overlaps no placed box, or None after the retry bound."""
    for _ in range(config.placement_retries):
        w = rng.uniform(config.min_box, config.max_box)
        h = rng.uniform(config.min_box, config.max_box)
        box = [rng.uniform(w / 2, 1 - w / 2), rng.uniform(h / 2, 1 - h / 2), w, h]
        if not _overlaps(box, placed):
            return box
    return None


def sample_objects(rng: random.Random, config: BenchmarkConfig) -> List[SceneObject]:
    pools = config.attribute_pools
    objects: List[SceneObject] = []
    for index in range(config.objects_per_image):
        box = place_box(rng, config, [o.box for o in objects])
        if box is None:
            logger.warning("Object placement failed, object dropped", retries=config.placement_retries)
            continue
        distract = bool(
            index > 0
            and objects
            and len(config.subjects) > 1
            and rng.random() < config.distractor_probability
        )
        if distract:
            source = objects[rng.randrange(len(objects))]
            subject = rng.choice([s for s in config.subjects if s != source.subject])
            attributes = list(source.attributes)
        else:
            subject = rng.choice(config.subjects)
            attributes = [rng.choice(values) for values in pools.values()]
        objects.append(SceneObject(box=box, subject=subject, attributes=attributes))
    return objects


def generate_synthetic_benchmark(config: BenchmarkConfig, seed: int = 0) -> BenchmarkDataset:
    """Scenes, per-object classes and per-track annotations, all drawn from ``seed``."""
    rng = random.Random(seed)
    tracks = resolve_tracks(config)
    size = config.grid * config.stride
    train_images = round(config.train_fraction * config.images)
    class_ids: Dict[str, int] = {}
    images: List[ImageRecord] = []

    for i in range(config.images):
        image_id = f"img{i:05d}"
        objects = sample_objects(rng, config)
        scene = SceneSpec(
            image_id=image_id,
            image_size=(size, size),
            stride=config.stride,
            seed=rng.randrange(SEED_RANGE),
            objects=objects,
        )
        classes = []
        for obj in objects:
            name = " ".join(obj.attributes + [obj.subject])
            class_id = class_ids.setdefault(name, len(class_ids))
            classes.append(object_class(obj.subject, obj.attributes, class_id))

        annotations = []
        for j, (obj, positive) in enumerate(zip(objects, classes)):
            for track in tracks:
                result = generate_negatives(
                    positive,
                    track.substitutions,
                    config.attribute_pools,
                    count=track.negatives_per_annotation,
                    seed=rng.randrange(SEED_RANGE),
                    only_type=track.attribute_type,
                )
                if not result.negatives:
                    continue
                annotations.append(
                    AnnotationRecord(
                        annotation_id=f"{image_id}:{j}:{track.name}",
                        image_id=image_id,
                        track=track.name,
                        gt_box=obj.box,
                        positive=positive,
                        negatives=result.negatives,
                        positive_index=rng.randrange(len(result.negatives) + 1),
                        status=result.status,
                    )
                )
        images.append(
            ImageRecord(
                image_id=image_id,
                split="train" if i < train_images else "test",
                scene=scene,
                classes=classes,
                annotations=annotations,
            )
        )

    manifest = BenchmarkManifest(
        seed=seed,
        tracks=tracks,
        subjects=list(config.subjects),
        attribute_pools={k: list(v) for k, v in config.attribute_pools.items()},
        images=len(images),
        annotations=sum(len(image.annotations) for image in images),
        vocabulary=list(class_ids),
    )
    logger.info(
        "Synthetic benchmark generated",
        images=manifest.images,
        annotations=manifest.annotations,
        classes=len(class_ids),
        seed=seed,
    )
    return BenchmarkDataset(manifest=manifest, images=images)


def benchmark_encoder(config: EncoderConfig, manifest: BenchmarkManifest) -> EncoderService:
    """Encoder service that knows every subject and attribute of the benchmark world."""
    attributes = [value for values in manifest.attribute_pools.values() for value in values]
    return EncoderService(config, subjects=manifest.subjects, attributes=attributes)


def planted_direction(encoder: EncoderService, cls: FineGrainedClass) -> torch.Tensor:
    """Visual direction an object of this class is planted with."""
    backend = encoder.image_backend
    registry = encoder.registry
    signal = backend.subject_weight * registry.visual(cls.subject)
    for attribute in cls.attributes:
        signal = signal + backend.attribute_weight * registry.visual(attribute)
    return l2_normalize(signal)


def oracle_records(
    dataset: BenchmarkDataset,
    encoder: EncoderService,
    fusion: Optional[FusionConfig] = None,
    split: str = "test",
) -> List[PredictionRecord]:
    """Ground-truth boxes scored by cosine against the planted directions."""
    fusion = fusion or FusionConfig()
    records = []
    for image in dataset.split(split):
        fmap = encoder.encode_image(image.scene)
        for annotation in image.annotations:
            vocabulary = annotation.vocabulary()
            directions = torch.stack([planted_direction(encoder, c) for c in vocabulary]).to(DTYPE)
            region = pool_region(fmap, annotation.gt_box, fusion.pooling)
            _, scores = fine_scores(region.vector, directions, fusion.m_fine)
            values = [float(v) for v in scores]
            records.append(
                PredictionRecord(
                    image_id=image.image_id,
                    annotation_id=annotation.annotation_id,
                    track=annotation.track,
                    vocabulary=[c.full_name for c in vocabulary],
                    positive_index=annotation.positive_index,
                    predictions=[
                        ScoredBox(box=list(annotation.gt_box), s_coarse=values, s_fine=values, s_final=values)
                    ],
                )
            )
    return records


