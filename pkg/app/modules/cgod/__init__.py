"""
Coarse-grained object detection module.
"""

from .layers import AttributeFusion, attribute_fuse, classify, coarse_scores, select_topk
from .model import GuidedDetector
from .types import DetectorOutput, FeatureContext, Prediction, QueryCandidate

__all__ = [
    "AttributeFusion",
    "attribute_fuse",
    "classify",
    "coarse_scores",
    "select_topk",
    "GuidedDetector",
    "DetectorOutput",
    "FeatureContext",
    "Prediction",
    "QueryCandidate",
]
