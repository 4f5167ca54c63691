"""
Evaluation controller.
Handles the synth, eval and ablate subcommands.
"""

import argparse
import os
from typing import List, Optional

import structlog

from app.cli.common import RunContext, fail, prepare_run
from app.core.errors import ConfigError
from app.utils.file_utils import atomic_write_text, read_jsonl, write_json

from .ablation import DEFAULT_SUITE, run_ablation
from .metrics import evaluate
from .reports import format_ablation_table, format_ap_table, write_ablation_plot, write_pr_plot
from .synthetic import benchmark_encoder, generate_synthetic_benchmark, oracle_records
from .types import BenchmarkDataset, PredictionRecord

logger = structlog.get_logger(__name__)


def load_or_generate(run: RunContext, data: Optional[str]) -> BenchmarkDataset:
    if data:
        return BenchmarkDataset.load(data)
    dataset = generate_synthetic_benchmark(run.config.benchmark, run.config.seed)
    dataset.save(run.path("benchmark"))
    return dataset


def parse_variants(raw: Optional[str]) -> List[str]:
    if not raw:
        return list(DEFAULT_SUITE)
    variants = [v.strip() for v in raw.split(",") if v.strip()]
    if not variants:
        raise ConfigError("--variants names no variant")
    return variants


class EvaluationController:
    """Controller for benchmark generation, scoring and ablation."""

    def synth(self, args: argparse.Namespace) -> int:
        """Generate the synthetic benchmark."""
        try:
            run = prepare_run(args)
            dataset = generate_synthetic_benchmark(run.config.benchmark, run.config.seed)
            directory = args.data or run.path("benchmark")
            dataset.save(directory)

            print(f"{'track':<14}{'annotations':>12}")
            for track in dataset.track_names():
                print(f"{track:<14}{len(dataset.annotations(track=track)):>12}")
            print(f"images: {dataset.manifest.images}  written to {directory}")
            return 0
        except Exception as e:
            return fail("synth", e)

    def eval(self, args: argparse.Namespace) -> int:
        """Score prediction records (or the oracle) against a benchmark."""
        try:
            run = prepare_run(args)
            if not args.predictions and not args.oracle:
                raise ConfigError("eval needs --predictions FILE or --oracle")
            dataset = BenchmarkDataset.load(args.data)
            if args.oracle:
                encoder = benchmark_encoder(run.config.encoder, dataset.manifest)
                records = oracle_records(dataset, encoder, run.config.fusion)
            else:
                records = read_jsonl(args.predictions, PredictionRecord)

            annotations = dataset.annotations()
            tracks = dataset.track_names()
            result = evaluate(
                annotations,
                records,
                tracks=tracks,
                iou_threshold=run.config.eval.iou_threshold,
                iou_sweep=run.config.eval.iou_sweep,
            )
            table = format_ap_table(result)
            write_json(run.path("results.json"), result.model_dump(mode="json"))
            atomic_write_text(run.path("results.txt"), table)
            if run.config.eval.plots:
                write_pr_plot(annotations, records, tracks, run.config.eval.iou_threshold, run.path("pr_curves.png"))

            print(table, end="")
            logger.info("Evaluation finished", average=result.average, annotations=result.annotations)
            return 0
        except Exception as e:
            return fail("eval", e)

    def ablate(self, args: argparse.Namespace) -> int:
        """Train and evaluate the ablation variants with one seed."""
        try:
            run = prepare_run(args)
            variants = parse_variants(args.variants)
            dataset = load_or_generate(run, args.data)
            report = run_ablation(run.config, dataset, variants)

            table = format_ablation_table(report)
            write_json(run.path("ablation.json"), report.model_dump(mode="json"))
            atomic_write_text(run.path("ablation.txt"), table)
            if run.config.eval.plots:
                write_ablation_plot(report, run.path("ablation.png"))

            print(table, end="")
            if report.status != "ok":
                logger.warning("Ablation incomplete", status=report.status)
            # every variant failing is an unexpected outcome, not a partial report
            return 0 if report.status != "failed" else 1
        except Exception as e:
            return fail("ablate", e)


evaluation_controller = EvaluationController()
