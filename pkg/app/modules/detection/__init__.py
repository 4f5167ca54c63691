"""
Detection module.
End-to-end pipeline; the detect subcommand is registered in routes.py.
"""

from .service import GuidedPipeline, build_scorer, to_record

__all__ = ["GuidedPipeline", "build_scorer", "to_record"]
