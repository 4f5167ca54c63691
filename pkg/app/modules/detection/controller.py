"""
Detection controller.
Handles the detect subcommand.
"""

import argparse

import structlog

from app.cli.common import fail, prepare_run
from app.modules.evaluation.synthetic import benchmark_encoder
from app.modules.evaluation.types import BenchmarkDataset
from app.utils.file_utils import write_jsonl
from app.utils.parallel import map_ordered

from .service import GuidedPipeline

logger = structlog.get_logger(__name__)


class DetectionController:
    def detect(self, args: argparse.Namespace) -> int:
        """Write one prediction record per benchmark annotation."""
        try:
            run = prepare_run(args)
            dataset = BenchmarkDataset.load(args.data)
            pipeline = GuidedPipeline(run.config, benchmark_encoder(run.config.encoder, dataset.manifest))
            if args.checkpoint:
                pipeline.load(args.checkpoint)
            else:
                logger.warning("No checkpoint given, detecting with initial weights")

            images = dataset.split(args.split)
            batches = map_ordered(pipeline.predict_image, images, run.config.workers)
            count = write_jsonl(run.path("predictions.jsonl"), (r for batch in batches for r in batch))
            print(f"images: {len(images)}  records: {count}  written to {run.path('predictions.jsonl')}")
            return 0
        except Exception as e:
            return fail("detect", e)


detection_controller = DetectionController()
