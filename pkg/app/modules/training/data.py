"""
Training samples from a benchmark dataset.

Stage 1 sees one base class per subject, described by class-level
attributes. Stage 2 sees the fine-grained classes of each image plus
attribute-substituted hard negatives.
"""

import asyncio
import random
from collections import Counter
from typing import Dict, List, Mapping, Optional

import structlog

from app.modules.evaluation.negatives import attribute_type, generate_negatives
from app.modules.evaluation.types import BenchmarkDataset, ImageRecord
from app.modules.vocabulary.service import RuleBasedParser, VocabularyService
from app.modules.vocabulary.types import FineGrainedClass

from .types import TrainSample

logger = structlog.get_logger(__name__)


def class_descriptions(dataset: BenchmarkDataset, split: str = "train") -> Dict[str, List[str]]:
    """Most frequent value of each attribute type per subject."""
    pools = dataset.manifest.attribute_pools
    counts: Dict[str, Dict[str, Counter]] = {}
    for image in dataset.split(split):
        for obj in image.scene.objects:
            per_type = counts.setdefault(obj.subject, {})
            for phrase in obj.attributes:
                kind = attribute_type(phrase, pools) or "other"
                per_type.setdefault(kind, Counter())[phrase] += 1
    descriptions = {}
    for subject in dataset.manifest.subjects:
        per_type = counts.get(subject, {})
        descriptions[subject] = [
            min(counter.items(), key=lambda item: (-item[1], item[0]))[0]
            for _, counter in sorted(per_type.items())
        ]
    return descriptions


def base_vocabulary(subjects: List[str], descriptions: Mapping[str, List[str]]) -> List[FineGrainedClass]:
    """One class per subject, attributes from the describer."""
    service = VocabularyService(RuleBasedParser(descriptions))

    async def describe_all():
        return await asyncio.gather(*(service.describe_class(s) for s in subjects))

    described = asyncio.run(describe_all())
    return [
        FineGrainedClass(class_id=i, full_name=s, subject=s, attributes=[a for a in attrs if a != s])
        for i, (s, attrs) in enumerate(zip(subjects, described))
    ]


def stage1_samples(
    dataset: BenchmarkDataset,
    split: str = "train",
    descriptions: Optional[Mapping[str, List[str]]] = None,
    limit: Optional[int] = None,
) -> List[TrainSample]:
    """Base-class samples; every object is labelled with its described subject class."""
    subjects = list(dataset.manifest.subjects)
    vocabulary = base_vocabulary(subjects, descriptions or class_descriptions(dataset, split))
    samples = []
    for image in dataset.split(split)[:limit]:
        ids = [subjects.index(o.subject) for o in image.scene.objects]
        samples.append(
            TrainSample(
                sample_id=image.image_id,
                scene=image.scene,
                vocabulary=vocabulary,
                gt_boxes=[o.box for o in image.scene.objects],
                gt_subject_ids=ids,
                gt_fine_ids=ids,
            )
        )
    logger.info("Stage-1 samples built", samples=len(samples), classes=len(vocabulary))
    return samples


def fine_sample(image: ImageRecord, pools: Mapping[str, List[str]], negatives: int, seed: int) -> TrainSample:
    vocabulary: List[FineGrainedClass] = []
    names: Dict[str, int] = {}

    def add(cls: FineGrainedClass) -> int:
        if cls.full_name not in names:
            names[cls.full_name] = len(vocabulary)
            vocabulary.append(cls.with_id(len(vocabulary)))
        return names[cls.full_name]

    fine_ids = [add(c) for c in image.classes]
    rng = random.Random(seed)
    if negatives:
        for cls in image.classes:
            result = generate_negatives(cls, 1, pools, count=negatives, seed=rng.randrange(2**31 - 1))
            for negative in result.negatives:
                add(negative)

    subjects = list(dict.fromkeys(c.subject for c in vocabulary))
    return TrainSample(
        sample_id=image.image_id,
        scene=image.scene,
        vocabulary=vocabulary,
        gt_boxes=[o.box for o in image.scene.objects],
        gt_subject_ids=[subjects.index(vocabulary[f].subject) for f in fine_ids],
        gt_fine_ids=fine_ids,
    )


def stage2_samples(
    dataset: BenchmarkDataset,
    negatives: int = 4,
    seed: int = 0,
    split: str = "train",
) -> List[TrainSample]:
    rng = random.Random(seed)
    pools = dataset.manifest.attribute_pools
    samples = [fine_sample(image, pools, negatives, rng.randrange(2**31 - 1)) for image in dataset.split(split)]
    logger.info("Stage-2 samples built", samples=len(samples), negatives=negatives)
    return samples
