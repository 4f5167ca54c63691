"""
factory_boy factories for domain types.
"""

import factory

from app.modules.encoders.types import SceneObject, SceneSpec
from app.modules.evaluation.types import AnnotationRecord, ScoredBox
from app.modules.vocabulary.types import FineGrainedClass, SubjectParse

SUBJECTS = ["cup", "chair", "lamp", "bag"]
COLORS = ["red", "blue", "green"]
MATERIALS = ["wooden", "metal", "plastic"]


class FineGrainedClassFactory(factory.Factory):
    class Meta:
        model = FineGrainedClass

    class_id = factory.Sequence(lambda n: n)
    subject = factory.Iterator(SUBJECTS)
    attributes = factory.LazyFunction(lambda: ["red", "wooden"])
    full_name = factory.LazyAttribute(lambda o: " ".join(list(o.attributes) + [o.subject]))


class SubjectParseFactory(factory.Factory):
    class Meta:
        model = SubjectParse

    input_name = factory.LazyAttribute(lambda o: " ".join(list(o.attributes) + [o.subject]))
    subject = factory.Iterator(SUBJECTS)
    attributes = factory.LazyFunction(lambda: ["red"])
    parser_id = "rules"


class SceneObjectFactory(factory.Factory):
    class Meta:
        model = SceneObject

    box = factory.LazyFunction(lambda: [0.3, 0.3, 0.3, 0.3])
    subject = "cup"
    attributes = factory.LazyFunction(lambda: ["red", "wooden"])


class SceneSpecFactory(factory.Factory):
    class Meta:
        model = SceneSpec

    image_id = factory.Sequence(lambda n: f"scene{n:03d}")
    image_size = (96, 96)
    stride = 16
    seed = factory.Sequence(lambda n: n)
    objects = factory.LazyFunction(lambda: [SceneObjectFactory()])


def caption(subject: str, color: str, material: str, class_id: int = 0) -> FineGrainedClass:
    return FineGrainedClass(
        class_id=class_id,
        full_name=f"{color} {material} {subject}",
        subject=subject,
        attributes=[color, material],
    )


class AnnotationRecordFactory(factory.Factory):
    """An annotation with one color-swapped negative."""

    class Meta:
        model = AnnotationRecord

    annotation_id = factory.Sequence(lambda n: f"ann{n:04d}")
    image_id = "img00000"
    track = "Hard"
    gt_box = factory.LazyFunction(lambda: [0.5, 0.5, 0.2, 0.2])
    positive = factory.LazyFunction(lambda: caption("cup", "red", "wooden"))
    negatives = factory.LazyAttribute(
        lambda o: [caption(o.positive.subject, "blue", o.positive.attributes[1], 1)]
    )
    positive_index = 0


class ScoredBoxFactory(factory.Factory):
    class Meta:
        model = ScoredBox

    box = factory.LazyFunction(lambda: [0.5, 0.5, 0.2, 0.2])
    s_coarse = factory.LazyFunction(lambda: [0.9, 0.9])
    s_fine = factory.LazyFunction(lambda: [0.8, 0.2])
    s_final = factory.LazyAttribute(lambda o: [(c * f) ** 0.5 for c, f in zip(o.s_coarse, o.s_fine)])
