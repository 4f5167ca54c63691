"""
Fine-grained attribute discrimination module.
"""

from .generative import GenerativeFineScorer, generative_score, get_generative_backend
from .service import CosineFineScorer, fine_scores, fuse_scores, pool_region, score_predictions
from .types import RegionFeature, ScoringContext

__all__ = [
    "GenerativeFineScorer",
    "generative_score",
    "get_generative_backend",
    "CosineFineScorer",
    "fine_scores",
    "fuse_scores",
    "pool_region",
    "score_predictions",
    "RegionFeature",
    "ScoringContext",
]
