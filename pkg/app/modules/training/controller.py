"""
Training controller.
Handles the train subcommand.
"""

import argparse
from typing import Dict, List

import structlog

from app.cli.common import fail, prepare_run
from app.modules.detection.service import GuidedPipeline
from app.modules.evaluation.synthetic import benchmark_encoder
from app.modules.evaluation.types import BenchmarkDataset
from app.utils.file_utils import read_jsonl, write_json
from app.utils.plots import plot_loss_curve

from .data import stage1_samples, stage2_samples
from .service import train_stage1, train_stage2
from .types import IterationLog, TrainResult

logger = structlog.get_logger(__name__)


class TrainingController:
    """Controller for the train subcommand."""

    def train(self, args: argparse.Namespace) -> int:
        """Run stage 1, stage 2 or both and write checkpoints and logs."""
        try:
            run = prepare_run(args)
            config = run.config
            dataset = BenchmarkDataset.load(args.data)
            pipeline = GuidedPipeline(config, benchmark_encoder(config.encoder, dataset.manifest))
            if args.init:
                pipeline.load(args.init)
            elif args.stage == "2":
                logger.warning("Stage 2 starts from an untrained detector; pass --init")

            alpha = config.fusion.alpha
            results: List[TrainResult] = []
            coarse = None
            if args.stage in ("1", "both") or config.train.co_train:
                coarse = stage1_samples(dataset, limit=config.train.stage1_images)
            if args.stage in ("1", "both"):
                results.append(
                    train_stage1(
                        pipeline,
                        coarse,
                        config.train.stage_config(1, alpha, config.seed),
                        checkpoint=run.path("stage1.ckpt"),
                        log_path=run.path("stage1_log.jsonl"),
                    )
                )
            if args.stage in ("2", "both"):
                results.append(
                    train_stage2(
                        pipeline,
                        stage2_samples(dataset, config.train.stage2_negatives, config.seed),
                        config.train.stage_config(2, alpha, config.seed),
                        coarse_samples=coarse,
                        checkpoint=run.path("stage2.ckpt"),
                        log_path=run.path("stage2_log.jsonl"),
                    )
                )

            write_json(run.path("train_report.json"), [r.model_dump(mode="json") for r in results])
            if args.plot:
                curves: Dict[str, List[float]] = {}
                for result in results:
                    logs = read_jsonl(result.log_path, IterationLog)
                    curves[f"stage {result.stage}"] = [log.loss for log in logs]
                plot_loss_curve(curves, run.path("loss.png"))

            print(f"{'stage':<7}{'iters':>7}{'final_loss':>12}{'mIoU':>8}{'proj_dist':>11}")
            for r in results:
                final = f"{r.final_loss:.4f}" if r.final_loss is not None else "-"
                miou = f"{r.mean_iou:.3f}" if r.mean_iou is not None else "-"
                print(f"{r.stage:<7}{r.iterations:>7}{final:>12}{miou:>8}{r.projection_distance:>11.4f}")
            return 0
        except Exception as e:
            return fail("train", e)


training_controller = TrainingController()
