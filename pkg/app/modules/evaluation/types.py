"""
Type definitions for the evaluation module.
"""

import os
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from app.core.errors import ArtifactIOError
from app.modules.encoders.types import SceneSpec, validate_box
from app.modules.vocabulary.types import FineGrainedClass
from app.utils.file_utils import atomic_write_text, read_json, read_jsonl, write_jsonl

BENCHMARK_FORMAT = "guided-benchmark"
BENCHMARK_VERSION = 1
MAX_NEGATIVES = 10


class TrackSpec(BaseModel):
    """One evaluation track: how many attribute phrases a negative substitutes."""

    name: str
    substitutions: int = Field(1, ge=1, le=3)
    negatives_per_annotation: int = Field(10, ge=1, le=MAX_NEGATIVES)
    attribute_type: Optional[str] = None


# Difficulty decreases with the number of substituted attributes.
DEFAULT_TRACKS: Dict[str, TrackSpec] = {
    "Hard": TrackSpec(name="Hard", substitutions=1),
    "Medium": TrackSpec(name="Medium", substitutions=2),
    "Easy": TrackSpec(name="Easy", substitutions=3),
    "Trivial": TrackSpec(name="Trivial", substitutions=3),
    "Color": TrackSpec(name="Color", substitutions=1, attribute_type="color"),
    "Material": TrackSpec(name="Material", substitutions=1, attribute_type="material"),
    "Pattern": TrackSpec(name="Pattern", substitutions=1, attribute_type="pattern"),
    "Transparency": TrackSpec(name="Transparency", substitutions=1, attribute_type="transparency"),
}


class NegativeSet(BaseModel):
    negatives: List[FineGrainedClass] = Field(default_factory=list)
    status: Literal["ok", "insufficient"] = "ok"
    message: str = ""


class AnnotationRecord(BaseModel):
    """One ground-truth object with the caption set it is evaluated against."""

    annotation_id: str
    image_id: str
    track: str
    gt_box: List[float]
    positive: FineGrainedClass
    negatives: List[FineGrainedClass] = Field(default_factory=list, max_length=MAX_NEGATIVES)
    positive_index: int = Field(0, ge=0)
    status: Literal["ok", "insufficient"] = "ok"

    @field_validator("gt_box")
    @classmethod
    def check_box(cls, v):
        return validate_box(v)

    @model_validator(mode="after")
    def check_negatives(self):
        if self.positive_index > len(self.negatives):
            raise ValueError("positive_index lies outside the evaluation vocabulary")
        for negative in self.negatives:
            if negative.subject != self.positive.subject:
                raise ValueError(f"negative {negative.full_name!r} changes the subject")
            if negative.attributes == self.positive.attributes:
                raise ValueError(f"negative {negative.full_name!r} keeps every attribute")
        return self

    def vocabulary(self) -> List[FineGrainedClass]:
        """Positive and negatives, positive at ``positive_index``, ids by position."""
        classes = list(self.negatives)
        classes.insert(self.positive_index, self.positive)
        return [c.with_id(i) for i, c in enumerate(classes)]


class ImageRecord(BaseModel):
    """One benchmark image: scene, the class of every object, and its annotations."""

    image_id: str
    split: Literal["train", "test"] = "test"
    scene: SceneSpec
    classes: List[FineGrainedClass] = Field(default_factory=list)
    annotations: List[AnnotationRecord] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_objects(self):
        if len(self.classes) != len(self.scene.objects):
            raise ValueError("every scene object needs exactly one class")
        return self


class BenchmarkManifest(BaseModel):
    format: str = BENCHMARK_FORMAT
    version: int = BENCHMARK_VERSION
    seed: int = 0
    tracks: List[TrackSpec] = Field(default_factory=list)
    subjects: List[str] = Field(default_factory=list)
    attribute_pools: Dict[str, List[str]] = Field(default_factory=dict)
    images: int = 0
    annotations: int = 0
    vocabulary: List[str] = Field(default_factory=list)


class BenchmarkDataset(BaseModel):
    """Manifest plus image records; stored as ``manifest.json`` + ``images.jsonl``."""

    manifest: BenchmarkManifest
    images: List[ImageRecord] = Field(default_factory=list)

    def split(self, name: str) -> List[ImageRecord]:
        return [image for image in self.images if image.split == name]

    def annotations(self, track: Optional[str] = None, split: Optional[str] = "test") -> List[AnnotationRecord]:
        return [
            annotation
            for image in self.images
            if split is None or image.split == split
            for annotation in image.annotations
            if track is None or annotation.track == track
        ]

    def track_names(self) -> List[str]:
        return [t.name for t in self.manifest.tracks]

    def save(self, directory: str) -> None:
        atomic_write_text(os.path.join(directory, "manifest.json"), self.manifest.model_dump_json(indent=2) + "\n")
        write_jsonl(os.path.join(directory, "images.jsonl"), self.images)

    @classmethod
    def load(cls, directory: str) -> "BenchmarkDataset":
        manifest = BenchmarkManifest.model_validate(read_json(os.path.join(directory, "manifest.json")))
        if manifest.format != BENCHMARK_FORMAT or manifest.version != BENCHMARK_VERSION:
            raise ArtifactIOError("Unsupported benchmark manifest", directory=directory, version=manifest.version)
        images = read_jsonl(os.path.join(directory, "images.jsonl"), ImageRecord)
        return cls(manifest=manifest, images=images)


class ScoredBox(BaseModel):
    """One prediction scored against an annotation's vocabulary."""

    box: List[float]
    s_coarse: List[float]
    s_fine: List[float]
    s_final: List[float]
    fine_fallback: bool = False

    @model_validator(mode="after")
    def check_lengths(self):
        if not len(self.s_coarse) == len(self.s_fine) == len(self.s_final):
            raise ValueError("score vectors must share one length")
        return self


class PredictionRecord(BaseModel):
    """All predictions for one annotation, scored over its own vocabulary."""

    image_id: str
    annotation_id: str
    track: str
    vocabulary: List[str]
    positive_index: int = Field(ge=0)
    predictions: List[ScoredBox] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_scores(self):
        n = len(self.vocabulary)
        if self.positive_index >= n:
            raise ValueError("positive_index lies outside the vocabulary")
        for prediction in self.predictions:
            if len(prediction.s_final) != n:
                raise ValueError("prediction scores do not cover the vocabulary")
        return self


class TrackResult(BaseModel):
    track: str
    ap: float = Field(ge=0.0, le=1.0)
    annotations: int = 0
    predictions: int = 0
    mean_iou: float = 0.0
    mean_score: float = 0.0
    ap_50_95: Optional[float] = None


class APResult(BaseModel):
    """Per-track AP and their average."""

    tracks: List[TrackResult] = Field(default_factory=list)
    average: float = Field(0.0, ge=0.0, le=1.0)
    iou_threshold: float = 0.5
    annotations: int = 0
    predictions: int = 0

    def ap(self, track: str) -> float:
        for result in self.tracks:
            if result.track == track:
                return result.ap
        raise KeyError(track)


class AblationRow(BaseModel):
    variant: str
    status: Literal["ok", "failed"] = "ok"
    error: Optional[str] = None
    result: Optional[APResult] = None
    mean_iou: float = 0.0
    mean_score: float = 0.0


class AblationReport(BaseModel):
    """Outcome of an ablation suite; failed variants keep their error."""

    status: Literal["ok", "partial", "failed"] = "ok"
    seed: int = 0
    rows: List[AblationRow] = Field(default_factory=list)

    def row(self, variant: str) -> AblationRow:
        for row in self.rows:
            if row.variant == variant:
                return row
        raise KeyError(variant)
