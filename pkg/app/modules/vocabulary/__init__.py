"""
Vocabulary module.
Subject identification for fine-grained class names; the parse subcommand is
registered in routes.py.
"""

from .service import VocabularyService, rule_based_parse, validate_parse, vocabulary_service
from .types import FineGrainedClass, ParseStatus, SubjectParse

__all__ = [
    "VocabularyService",
    "vocabulary_service",
    "rule_based_parse",
    "validate_parse",
    "FineGrainedClass",
    "ParseStatus",
    "SubjectParse",
]
