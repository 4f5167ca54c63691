"""
Type definitions for the vocabulary module.
"""

from enum import Enum
from typing import Dict, List, Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator


class ParseStatus(str, Enum):
    """Outcome taxonomy of subject identification."""

    OK = "ok"
    HALLUCINATION = "hallucination"
    OTHER_ERROR = "other_error"


class SubjectParse(BaseModel):
    """Raw output of one parser for one class name."""

    model_config = ConfigDict(frozen=True)

    input_name: str
    subject: str
    attributes: List[str] = Field(default_factory=list)
    parser_id: str
    status: ParseStatus = ParseStatus.OK


class FineGrainedClass(BaseModel):
    """A fine-grained class name decomposed into subject and attributes."""

    model_config = ConfigDict(frozen=True)

    class_id: int = Field(ge=0)
    full_name: str
    subject: str
    attributes: List[str] = Field(default_factory=list)
    status: ParseStatus = ParseStatus.OK

    @model_validator(mode="after")
    def check_decomposition(self):
        if self.status == ParseStatus.OK and not self.subject.strip():
            raise ValueError("subject must be non-empty when parsing succeeded")
        if len(set(self.attributes)) != len(self.attributes):
            raise ValueError(f"duplicate attributes in {self.full_name!r}")
        if self.subject in self.attributes:
            raise ValueError(f"attribute equal to subject in {self.full_name!r}")
        return self

    @property
    def attribute_count(self) -> int:
        return len(self.attributes)

    def with_id(self, class_id: int) -> "FineGrainedClass":
        return self.model_copy(update={"class_id": class_id})


class VocabularyResult(BaseModel):
    """Batch outcome of build_vocabulary; per-name failures never abort the batch."""

    status: Literal["ok", "partial", "failed"]
    message: str
    classes: List[FineGrainedClass] = Field(default_factory=list)
    failures: Dict[str, str] = Field(default_factory=dict)
    status_counts: Dict[str, int] = Field(default_factory=dict)
    parser_invocations: int = 0
